//! Discretization-validity machinery: a census of lattice edges the zero set
//! crosses more than once, mesh-budget calculators, sup-norm and
//! transversality statistics of the field, and quantitative
//! inverse-function-theorem boxes.
//!
//! The percolation picture is faithful only while every lattice edge meets
//! the zero set at most once. The tools here measure how often that fails at
//! a given mesh and evaluate the bookkeeping that says how fine the mesh must
//! be for the failure probability to vanish.

use crate::experiments::{check_memory, wilson, Z_95};
use crate::kernels::Kernel;
use crate::lattice::{enumerate, Box2, Enumeration, Lattice};
use crate::sampler::{child_seed, CirculantGrid, RasterGrid};
use crate::{Error, Result};
use rayon::prelude::*;

const LANE_CENSUS: u64 = 13;
const LANE_SUPNORM: u64 = 14;
const LANE_TRANSVERSALITY: u64 = 15;
const LANE_CRITICAL: u64 = 16;

/// Calibrated constants entering the mesh budget. The budget formulas prove
/// existence of these constants but no values; the defaults record desk-scale
/// calibrations.
#[derive(Debug, Clone, Copy)]
pub struct MeshConstants {
    /// First-moment bound constant for the sup-norm growth `sqrt(ln s)`.
    pub c1: f64,
    /// Calibrated transversality constant.
    pub mu_param: f64,
    /// Calibrated near-edge critical-count constant.
    pub beta_param: f64,
    /// Directional-derivative moment constant.
    pub mu_t: f64,
    /// Number of edge-direction families of the lattice.
    pub direction_count: u32,
}

impl Default for MeshConstants {
    fn default() -> Self {
        MeshConstants { c1: 1.0, mu_param: 0.5, beta_param: 1.0, mu_t: 1.0, direction_count: 4 }
    }
}

/// All mesh-validity scales for a box of half-side `s` at targets
/// `(delta, eta)`.
#[derive(Debug, Clone, Copy)]
pub struct MeshBudget {
    pub s: f64,
    pub delta: f64,
    pub eta: f64,
    /// Transversality floor `mu * (2s)^(-2 - eta/6)`.
    pub lambda_s: f64,
    /// Sup-norm budget `(3 N c1 / delta) * sqrt(ln 2s)`.
    pub kbar_s: f64,
    /// Conditioning ratio `kbar / lambda`.
    pub psi_s: f64,
    /// First admissible mesh `(1/(4 psi))^2`.
    pub eps1_s: f64,
    /// Second admissible mesh `(delta/3N) / (50 mu_t^2 beta s^2 psi^3)`.
    pub eps2_s: f64,
    /// Direction-count mesh `1/(floor(s^(8 + eta/32)) + 1)` at unit radius.
    pub eps_sigma: f64,
    /// The regime where the full theorem statement applies: `s^(-8-eta)`.
    pub admissible_eps: f64,
    /// Set when `psi < 1`, outside the budget's domain of validity.
    pub below_threshold: bool,
    pub constants: MeshConstants,
}

impl MeshBudget {
    /// Near-edge critical budget `50 mu_t^2 eps^2 psi^3` at mesh `eps`.
    pub fn theta(&self, eps: f64) -> f64 {
        50.0 * self.constants.mu_t * self.constants.mu_t * eps * eps * self.psi_s.powi(3)
    }
}

/// Evaluates the full mesh budget for a box of half-side `s >= 2`.
pub fn mesh_calculator(
    s: f64,
    delta: f64,
    eta: f64,
    constants: &MeshConstants,
) -> Result<MeshBudget> {
    if !(s >= 2.0 && s.is_finite()) {
        return Err(Error::Domain(format!("mesh budget: need s >= 2, got {s}")));
    }
    if !(delta > 0.0 && eta > 0.0) {
        return Err(Error::Validation(format!(
            "mesh budget: targets must be positive, got delta={delta}, eta={eta}"
        )));
    }
    if !(constants.c1 > 0.0
        && constants.mu_param > 0.0
        && constants.beta_param > 0.0
        && constants.mu_t > 0.0
        && constants.direction_count > 0)
    {
        return Err(Error::Validation(
            "mesh budget: calibrated constants must be positive".into(),
        ));
    }
    let n = constants.direction_count as f64;
    let lambda_s = constants.mu_param * (2.0 * s).powf(-2.0 - eta / 6.0);
    let kbar_s = (3.0 * n * constants.c1 / delta) * (2.0 * s).ln().sqrt();
    let psi_s = kbar_s / lambda_s;
    let eps1_s = 1.0 / (16.0 * psi_s * psi_s);
    let eps2_s = (delta / (3.0 * n))
        / (50.0 * constants.mu_t * constants.mu_t * constants.beta_param * s * s * psi_s.powi(3));
    Ok(MeshBudget {
        s,
        delta,
        eta,
        lambda_s,
        kbar_s,
        psi_s,
        eps1_s,
        eps2_s,
        eps_sigma: eps_sigma(1.0, s, eta)?,
        admissible_eps: s.powf(-(8.0 + eta)),
        below_threshold: psi_s < 1.0,
        constants: *constants,
    })
}

/// Mesh at a supremum scale: `1 / (floor((r * sigma)^(8 + eta/32)) + 1)`.
pub fn eps_sigma(r: f64, sigma: f64, eta: f64) -> Result<f64> {
    if !(r > 0.0 && sigma > 0.0 && eta > 0.0) {
        return Err(Error::Validation(format!(
            "eps_sigma: need positive arguments, got r={r}, sigma={sigma}, eta={eta}"
        )));
    }
    let raw = (r * sigma).powf(8.0 + eta / 32.0);
    if !raw.is_finite() || raw >= u64::MAX as f64 {
        return Err(Error::Domain(format!(
            "eps_sigma: ({r} * {sigma})^(8 + eta/32) overflows the floor"
        )));
    }
    Ok(1.0 / (raw.floor() + 1.0))
}

/// Quantitative inverse-function-theorem box: given `|f| <= k` (with two
/// derivatives) and `max(|f|, |df|) >= lambda` on a ball, the zero set inside
/// the concentric box of side `eps = (lambda/4k)^2` is a graph with second
/// derivative at most `100 (k/lambda)^3`.
#[derive(Debug, Clone, Copy)]
pub struct IftBox {
    pub eps: f64,
    pub phi_second_bound: f64,
}

pub fn ift_box(k_bound: f64, lambda_bound: f64) -> Result<IftBox> {
    if !(lambda_bound > 0.0 && k_bound.is_finite() && lambda_bound.is_finite()) {
        return Err(Error::Validation(format!(
            "ift box: need positive finite bounds, got k={k_bound}, lambda={lambda_bound}"
        )));
    }
    if k_bound < lambda_bound {
        return Err(Error::Domain(format!(
            "ift box: need k >= lambda, got k={k_bound} < lambda={lambda_bound}"
        )));
    }
    let ratio = k_bound / lambda_bound;
    Ok(IftBox {
        eps: 1.0 / (16.0 * ratio * ratio),
        phi_second_bound: 100.0 * ratio.powi(3),
    })
}

/// Census of edges whose subsampled field values change sign at least twice.
#[derive(Debug, Clone)]
pub struct CensusReport {
    pub edges_total: u64,
    pub replicates: u64,
    /// Flagged edges summed over replicates.
    pub flagged_total: u64,
    pub mean_flagged_fraction: f64,
    /// Replicates with no flagged edge at all.
    pub zero_flag_replicates: u64,
    /// Estimate of `P[no edge in the box is crossed twice]`, with its 95%
    /// Wilson interval.
    pub p_none_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub subsample_k: usize,
    /// Pitch of the joint sampling raster: `eps / (2 (k+1))`.
    pub pitch: f64,
    /// Subsampling detects a sign change only if it straddles two sample
    /// points, so every count here is a lower bound on the true number of
    /// zero-set crossings.
    pub lower_bound_only: bool,
}

/// Interior-inclusive subsample points of every enumerated edge: `k + 2`
/// points per edge (endpoints plus `k` equally spaced interior points),
/// edge-contiguous in the output.
pub fn edge_subsample_points(e: &Enumeration, subsample_k: usize) -> Vec<[f64; 2]> {
    let per_edge = subsample_k + 2;
    let mut out = Vec::with_capacity(e.edges.len() * per_edge);
    for &(a, b) in &e.edges {
        let pa = e.points[a as usize];
        let pb = e.points[b as usize];
        for j in 0..per_edge {
            let t = j as f64 / (subsample_k + 1) as f64;
            out.push([pa[0] + (pb[0] - pa[0]) * t, pa[1] + (pb[1] - pa[1]) * t]);
        }
    }
    out
}

fn sign_changes(values: &[f64]) -> usize {
    values
        .windows(2)
        .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
        .count()
}

/// Number of edges (contiguous blocks of `k + 2` values) with at least two
/// sign changes.
pub fn flagged_edge_count(values: &[f64], subsample_k: usize) -> Result<u64> {
    let per_edge = subsample_k + 2;
    if values.len() % per_edge != 0 {
        return Err(Error::Validation(format!(
            "census values: length {} is not a multiple of {per_edge}",
            values.len()
        )));
    }
    Ok(values
        .chunks_exact(per_edge)
        .filter(|edge| sign_changes(edge) >= 2)
        .count() as u64)
}

/// Monte Carlo census of doubly-crossed edges in the box of half-side `s` at
/// mesh `eps`: per replicate, the field is sampled jointly at all vertices
/// and edge-interior points via one circulant draw on the unified fine
/// raster, and every edge whose value sequence changes sign at least twice is
/// flagged.
pub fn double_crossing_census(
    kernel: &Kernel,
    mesh_eps: f64,
    s: f64,
    subsample_k: usize,
    replicates: u64,
    seed: u64,
    memory_cap_bytes: u64,
) -> Result<CensusReport> {
    if subsample_k < 4 {
        return Err(Error::Validation(format!(
            "census: need at least 4 interior points per edge, got {subsample_k}"
        )));
    }
    if replicates == 0 {
        return Err(Error::Validation("census: need at least one replicate".into()));
    }
    let lattice = Lattice::face_centered_square(mesh_eps)?;
    let window = Box2::centered(s)?;
    let e = enumerate(&lattice, &window);
    if e.edges.is_empty() {
        return Err(Error::Validation(format!(
            "census: box of half-side {s} holds no complete edge at mesh {mesh_eps}"
        )));
    }
    // Every subsample point of every edge is an integer multiple of this
    // pitch, so one raster carries the joint sample.
    let pitch = mesh_eps / (2.0 * (subsample_k + 1) as f64);
    let raster = RasterGrid::covering(&window, pitch)?;
    check_memory(&raster, memory_cap_bytes)?;
    let grid = CirculantGrid::auto(kernel, &raster)?;
    let raster = grid.grid().clone();
    let indices: Vec<usize> = edge_subsample_points(&e, subsample_k)
        .into_iter()
        .map(|p| {
            let ix = (p[0] / pitch - raster.i0 as f64).round() as i64;
            let iy = (p[1] / pitch - raster.j0 as f64).round() as i64;
            raster.index(ix as usize, iy as usize)
        })
        .collect();

    let per_replicate: Vec<Result<u64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let field = grid.sample(child_seed(seed, LANE_CENSUS, r));
            let values: Vec<f64> = indices.iter().map(|&i| field.values[i]).collect();
            flagged_edge_count(&values, subsample_k)
        })
        .collect();
    let mut flagged_total = 0u64;
    let mut zero_flag_replicates = 0u64;
    for flagged in per_replicate {
        let flagged = flagged?;
        flagged_total += flagged;
        zero_flag_replicates += u64::from(flagged == 0);
    }
    let edges_total = e.edges.len() as u64;
    let (wilson_lo, wilson_hi) = wilson(zero_flag_replicates, replicates, Z_95)?;
    Ok(CensusReport {
        edges_total,
        replicates,
        flagged_total,
        mean_flagged_fraction: flagged_total as f64 / (edges_total * replicates) as f64,
        zero_flag_replicates,
        p_none_hat: zero_flag_replicates as f64 / replicates as f64,
        wilson_lo,
        wilson_hi,
        subsample_k,
        pitch,
        lower_bound_only: true,
    })
}

/// Mean of `max |f|` over the vertices of nested boxes.
#[derive(Debug, Clone, Copy)]
pub struct SupnormRow {
    pub s: f64,
    pub mean_max: f64,
    pub std_error: f64,
    /// `mean_max / sqrt(ln s)`: bounded across scales when the sup-norm
    /// moment bound holds.
    pub ratio_to_sqrt_log: f64,
}

/// Estimates `E[max over B_s of |f|]` on a raster of the given pitch for each
/// half-side in `s_grid`, reusing one joint sample per replicate for every
/// scale, so per-sample maxima are nondecreasing in `s` exactly.
pub fn supnorm_statistic(
    kernel: &Kernel,
    s_grid: &[f64],
    pitch: f64,
    replicates: u64,
    seed: u64,
) -> Result<Vec<SupnormRow>> {
    validate_scale_grid(s_grid)?;
    if replicates < 2 {
        return Err(Error::Validation("sup-norm: need at least two replicates".into()));
    }
    let s_max = *s_grid.last().expect("nonempty");
    let window = Box2::centered(s_max)?;
    let raster = RasterGrid::covering(&window, pitch)?;
    check_memory(&raster, crate::experiments::DEFAULT_MEMORY_CAP)?;
    let grid = CirculantGrid::auto(kernel, &raster)?;
    let raster = grid.grid().clone();
    // Bucket of the first grid scale containing each raster point.
    let buckets = bucket_indices(&raster, s_grid);

    let per_rep: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let field = grid.sample(child_seed(seed, LANE_SUPNORM, r));
            let mut bucket_max = vec![0.0_f64; s_grid.len()];
            for (v, &b) in field.values.iter().zip(&buckets) {
                if b < bucket_max.len() && v.abs() > bucket_max[b] {
                    bucket_max[b] = v.abs();
                }
            }
            // Prefix maxima turn per-bucket maxima into per-box maxima.
            for i in 1..bucket_max.len() {
                bucket_max[i] = bucket_max[i].max(bucket_max[i - 1]);
            }
            bucket_max
        })
        .collect();

    Ok(s_grid
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let maxima: Vec<f64> = per_rep.iter().map(|m| m[i]).collect();
            let mean = maxima.iter().sum::<f64>() / maxima.len() as f64;
            let var = maxima.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (maxima.len() - 1) as f64;
            SupnormRow {
                s,
                mean_max: mean,
                std_error: (var / maxima.len() as f64).sqrt(),
                ratio_to_sqrt_log: mean / s.ln().sqrt(),
            }
        })
        .collect())
}

fn validate_scale_grid(s_grid: &[f64]) -> Result<()> {
    if s_grid.is_empty() {
        return Err(Error::Validation("scale grid is empty".into()));
    }
    if s_grid.iter().any(|&s| !(2.0..=64.0).contains(&s)) {
        return Err(Error::Validation(
            "scale grid must lie within [2, 64]".into(),
        ));
    }
    if s_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Validation("scale grid must be strictly increasing".into()));
    }
    Ok(())
}

fn bucket_indices(raster: &RasterGrid, s_grid: &[f64]) -> Vec<usize> {
    let mut buckets = Vec::with_capacity(raster.len());
    for iy in 0..raster.ny {
        for ix in 0..raster.nx {
            let p = raster.point(ix, iy);
            let m = p[0].abs().max(p[1].abs());
            buckets.push(s_grid.partition_point(|&s| s < m));
        }
    }
    buckets
}

/// Distribution summary of the transversality statistic
/// `min over B_s of max(|f|, |grad f|)` and the reciprocal moment
/// `E[Phi^(1/2)]` with `Phi = 1 / (|f| |grad f|^2)`.
#[derive(Debug, Clone)]
pub struct TransversalityRow {
    pub s: f64,
    /// Empirical quantiles (level, value) of the per-replicate minimum.
    pub quantiles: Vec<(f64, f64)>,
    /// `quantile(delta) / s^(-2-eta)`: the empirical transversality constant
    /// for this scale, recorded — never asserted.
    pub mu_calibrated: f64,
}

#[derive(Debug, Clone)]
pub struct TransversalityStats {
    pub rows: Vec<TransversalityRow>,
    /// Mean of `Phi^(1/2)` over all interior grid evaluations of the largest
    /// box, with the standard error across replicates.
    pub e_phi_half: f64,
    pub phi_std_error: f64,
    /// Magnitude of the finite-difference curvature error: `pitch^2`.
    pub curvature_error: f64,
    pub delta: f64,
    pub eta: f64,
}

/// Estimates the transversality statistic over nested boxes. Gradients use
/// centered differences at the raster pitch; per-sample minima are computed
/// on one joint sample, so they are nonincreasing in `s` exactly.
pub fn transversality_statistic(
    kernel: &Kernel,
    s_grid: &[f64],
    pitch: f64,
    replicates: u64,
    seed: u64,
    delta: f64,
    eta: f64,
) -> Result<TransversalityStats> {
    validate_scale_grid(s_grid)?;
    if replicates < 2 {
        return Err(Error::Validation(
            "transversality: need at least two replicates".into(),
        ));
    }
    if !(0.0 < delta && delta < 1.0 && eta > 0.0) {
        return Err(Error::Validation(format!(
            "transversality: need quantile level in (0,1) and positive eta, got delta={delta}, eta={eta}"
        )));
    }
    let s_max = *s_grid.last().expect("nonempty");
    // One pitch of margin so every point of B_{s_max} has centered-difference
    // neighbors.
    let window = Box2::centered(s_max + pitch)?;
    let raster = RasterGrid::covering(&window, pitch)?;
    check_memory(&raster, crate::experiments::DEFAULT_MEMORY_CAP)?;
    let grid = CirculantGrid::auto(kernel, &raster)?;
    let raster = grid.grid().clone();
    let buckets = bucket_indices(&raster, s_grid);

    struct RepOutcome {
        minima: Vec<f64>,
        phi_mean: f64,
    }
    let outcomes: Vec<RepOutcome> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let field = grid.sample(child_seed(seed, LANE_TRANSVERSALITY, r));
            let v = &field.values;
            let mut bucket_min = vec![f64::INFINITY; s_grid.len()];
            let mut phi_sum = 0.0;
            let mut phi_count = 0u64;
            for iy in 1..raster.ny - 1 {
                for ix in 1..raster.nx - 1 {
                    let idx = raster.index(ix, iy);
                    let b = buckets[idx];
                    if b >= bucket_min.len() {
                        continue;
                    }
                    let f = v[idx].abs();
                    let fx = (v[raster.index(ix + 1, iy)] - v[raster.index(ix - 1, iy)])
                        / (2.0 * pitch);
                    let fy = (v[raster.index(ix, iy + 1)] - v[raster.index(ix, iy - 1)])
                        / (2.0 * pitch);
                    let grad = fx.hypot(fy);
                    let stat = f.max(grad);
                    if stat < bucket_min[b] {
                        bucket_min[b] = stat;
                    }
                    phi_sum += 1.0 / (f * grad * grad).sqrt();
                    phi_count += 1;
                }
            }
            // B_s contains every bucket up to s, so the per-box minima are
            // the prefix minima over buckets.
            let mut minima = vec![f64::INFINITY; s_grid.len()];
            let mut acc = f64::INFINITY;
            for (i, m) in bucket_min.iter().enumerate() {
                acc = acc.min(*m);
                minima[i] = acc;
            }
            RepOutcome { minima, phi_mean: phi_sum / phi_count.max(1) as f64 }
        })
        .collect();

    let levels = [0.05, 0.1, 0.25, 0.5];
    let rows = s_grid
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut minima: Vec<f64> = outcomes.iter().map(|o| o.minima[i]).collect();
            minima.sort_by(|a, b| a.total_cmp(b));
            let quantile = |q: f64| {
                let idx = ((q * minima.len() as f64).ceil() as usize).clamp(1, minima.len()) - 1;
                minima[idx]
            };
            let mut quantiles: Vec<(f64, f64)> =
                levels.iter().map(|&q| (q, quantile(q))).collect();
            if !levels.contains(&delta) {
                quantiles.push((delta, quantile(delta)));
            }
            TransversalityRow {
                s,
                quantiles,
                mu_calibrated: quantile(delta) / s.powf(-(2.0 + eta)),
            }
        })
        .collect();
    let phi_means: Vec<f64> = outcomes.iter().map(|o| o.phi_mean).collect();
    let mean = phi_means.iter().sum::<f64>() / phi_means.len() as f64;
    let var = phi_means.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
        / (phi_means.len() - 1) as f64;
    Ok(TransversalityStats {
        rows,
        e_phi_half: mean,
        phi_std_error: (var / phi_means.len() as f64).sqrt(),
        curvature_error: pitch * pitch,
        delta,
        eta,
    })
}

/// Edge-direction families of the face-centered square lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    XAxis,
    YAxis,
    DiagUp,
    DiagDown,
}

impl Direction {
    /// Distance from a point to the nearest lattice line carrying edges of
    /// this direction, for mesh `eps`.
    pub fn line_distance(&self, p: [f64; 2], eps: f64) -> f64 {
        let wrap = |c: f64| (c - eps * (c / eps).round()).abs();
        match self {
            Direction::XAxis => wrap(p[1]),
            Direction::YAxis => wrap(p[0]),
            Direction::DiagUp => wrap(p[1] - p[0]) / std::f64::consts::SQRT_2,
            Direction::DiagDown => wrap(p[1] + p[0]) / std::f64::consts::SQRT_2,
        }
    }

}

/// Monte Carlo estimate of the near-edge critical count.
#[derive(Debug, Clone, Copy)]
pub struct CriticalCensus {
    pub mean_count: f64,
    pub std_error: f64,
    pub replicates: u64,
    pub aux_pitch: f64,
    pub theta: f64,
}

/// Counts auxiliary-grid cells where the field and its directional
/// derivative along `v` both change sign — the discrete signature of the
/// zero set turning tangent to `v` — within distance `theta` of the lattice
/// lines carrying direction-`v` edges.
pub fn near_edge_critical_census(
    kernel: &Kernel,
    mesh_eps: f64,
    theta: f64,
    s: f64,
    v: Direction,
    aux_pitch: f64,
    replicates: u64,
    seed: u64,
) -> Result<CriticalCensus> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::Validation(format!(
            "critical census: strip width must be nonnegative, got {theta}"
        )));
    }
    if replicates < 2 {
        return Err(Error::Validation(
            "critical census: need at least two replicates".into(),
        ));
    }
    if theta == 0.0 {
        return Ok(CriticalCensus {
            mean_count: 0.0,
            std_error: 0.0,
            replicates,
            aux_pitch,
            theta,
        });
    }
    if !(aux_pitch > 0.0) || aux_pitch > theta / 2.0 {
        return Err(Error::Resolution(format!(
            "critical census: auxiliary pitch {aux_pitch} cannot resolve a strip of width {theta}; need pitch <= theta/2"
        )));
    }
    let window = Box2::centered(s + 2.0 * aux_pitch)?;
    let raster = RasterGrid::covering(&window, aux_pitch)?;
    check_memory(&raster, crate::experiments::DEFAULT_MEMORY_CAP)?;
    let grid = CirculantGrid::auto(kernel, &raster)?;
    let raster = grid.grid().clone();

    // Directional derivative stencil on the auxiliary grid.
    let (dx, dy, step) = match v {
        Direction::XAxis => (1i64, 0i64, 2.0 * aux_pitch),
        Direction::YAxis => (0, 1, 2.0 * aux_pitch),
        Direction::DiagUp => (1, 1, 2.0 * aux_pitch * std::f64::consts::SQRT_2),
        Direction::DiagDown => (1, -1, 2.0 * aux_pitch * std::f64::consts::SQRT_2),
    };
    let counts: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let field = grid.sample(child_seed(seed, LANE_CRITICAL, r));
            let vals = &field.values;
            let deriv = |ix: usize, iy: usize| {
                let (ix, iy) = (ix as i64, iy as i64);
                (vals[raster.index((ix + dx) as usize, (iy + dy) as usize)]
                    - vals[raster.index((ix - dx) as usize, (iy - dy) as usize)])
                    / step
            };
            let mut count = 0u64;
            for iy in 1..raster.ny - 2 {
                for ix in 1..raster.nx - 2 {
                    let center = {
                        let p = raster.point(ix, iy);
                        [p[0] + aux_pitch / 2.0, p[1] + aux_pitch / 2.0]
                    };
                    if center[0].abs() > s || center[1].abs() > s {
                        continue;
                    }
                    if v.line_distance(center, mesh_eps) > theta {
                        continue;
                    }
                    let corners = [
                        (ix, iy),
                        (ix + 1, iy),
                        (ix, iy + 1),
                        (ix + 1, iy + 1),
                    ];
                    let fsign = |c: (usize, usize)| vals[raster.index(c.0, c.1)] >= 0.0;
                    let first_f = fsign(corners[0]);
                    if corners.iter().all(|&c| fsign(c) == first_f) {
                        continue;
                    }
                    let gsign = |c: (usize, usize)| deriv(c.0, c.1) >= 0.0;
                    let first_g = gsign(corners[0]);
                    if corners.iter().all(|&c| gsign(c) == first_g) {
                        continue;
                    }
                    count += 1;
                }
            }
            count as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>()
        / (counts.len() - 1) as f64;
    Ok(CriticalCensus {
        mean_count: mean,
        std_error: (var / counts.len() as f64).sqrt(),
        replicates,
        aux_pitch,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_budget_at_4() -> MeshBudget {
        mesh_calculator(4.0, 0.05, 1.0, &MeshConstants::default()).unwrap()
    }

    #[test]
    fn mesh_budget_matches_frozen_values() {
        let b = default_budget_at_4();
        assert!((b.lambda_s - 0.0055242717280199025).abs() < 1e-15);
        assert!((b.kbar_s - 346.08645278421192).abs() < 1e-9);
        assert!((b.psi_s - 62648.339875971623).abs() < 1e-6);
        assert!((b.eps1_s - 1.5924319524334133e-11).abs() < 1e-23);
        assert!((b.eps2_s - 2.1182151508803462e-20).abs() < 1e-32);
        assert!((b.theta(0.01) - 1229415560352.4766).abs() < 1e-1);
        assert_eq!(b.admissible_eps, 3.814697265625e-6);
        assert!((b.eps_sigma - 1.0 / 68438.0).abs() < 1e-18);
        assert!(!b.below_threshold);
        assert!(b.psi_s >= 1.0);
    }

    #[test]
    fn mesh_budget_identities() {
        let b = default_budget_at_4();
        // psi is exactly the ratio of its two factors.
        assert_eq!(b.psi_s, b.kbar_s / b.lambda_s);
        assert_eq!(b.eps1_s, 1.0 / (16.0 * b.psi_s * b.psi_s));
        // Doubling the mesh exactly quadruples the near-edge budget.
        assert_eq!(b.theta(0.02), 4.0 * b.theta(0.01));
        // The sup-norm budget grows exactly like sqrt(ln 2s).
        let b8 = mesh_calculator(8.0, 0.05, 1.0, &MeshConstants::default()).unwrap();
        let r4 = b.kbar_s / (2.0_f64 * 4.0).ln().sqrt();
        let r8 = b8.kbar_s / (2.0_f64 * 8.0).ln().sqrt();
        assert!((r4 - r8).abs() < 1e-12 * r4.abs());
        // Purity: same inputs, bitwise same outputs.
        let again = default_budget_at_4();
        assert_eq!(b.psi_s, again.psi_s);
        assert_eq!(b.eps2_s, again.eps2_s);
    }

    #[test]
    fn mesh_budget_flags_and_errors() {
        // A huge transversality constant pushes psi below one: flagged, not
        // an error.
        let consts = MeshConstants { mu_param: 1e9, ..MeshConstants::default() };
        let b = mesh_calculator(2.0, 3.0, 6.0, &consts).unwrap();
        assert!(b.below_threshold);
        assert!(b.psi_s < 1.0);

        assert!(mesh_calculator(1.5, 0.05, 1.0, &MeshConstants::default()).is_err());
        assert!(mesh_calculator(4.0, 0.0, 1.0, &MeshConstants::default()).is_err());
        let bad = MeshConstants { c1: 0.0, ..MeshConstants::default() };
        assert!(mesh_calculator(4.0, 0.05, 1.0, &bad).is_err());
    }

    #[test]
    fn eps_sigma_closed_forms() {
        // Exponent 8 + 32/32 = 9 at r*sigma = 2: floor(512) + 1.
        assert_eq!(eps_sigma(1.0, 2.0, 32.0).unwrap(), 1.0 / 513.0);
        assert_eq!(eps_sigma(1.0, 2.0, 1.0).unwrap(), 1.0 / 262.0);
        assert_eq!(eps_sigma(2.0, 3.0, 2.0).unwrap(), 1.0 / 1878644.0);
        assert!(eps_sigma(0.0, 2.0, 1.0).is_err());
        assert!(eps_sigma(1e30, 1e30, 32.0).is_err());
    }

    #[test]
    fn ift_box_values_and_identity() {
        let b = ift_box(1.0, 1.0).unwrap();
        assert_eq!(b.eps, 1.0 / 16.0);
        assert_eq!(b.phi_second_bound, 100.0);
        let b = ift_box(2.0, 1.0).unwrap();
        assert_eq!(b.eps, 1.0 / 64.0);
        assert_eq!(b.phi_second_bound, 800.0);
        // eps * bound^(2/3) is scale-free.
        let reference = 100.0_f64.powf(2.0 / 3.0) / 16.0;
        for (k, l) in [(1.0, 1.0), (3.0, 2.0), (10.0, 0.5), (7.5, 7.5)] {
            let b = ift_box(k, l).unwrap();
            let inv = b.eps * b.phi_second_bound.powf(2.0 / 3.0);
            assert!((inv - reference).abs() < 1e-12 * reference);
        }
        assert!(ift_box(0.5, 1.0).is_err());
        assert!(ift_box(-1.0, -2.0).is_err());
    }

    #[test]
    fn sine_fixture_flags_aligned_horizontal_edges() {
        // f(x, y) = sin(2 pi x / eps): horizontal edges span one full
        // period, so their subsampled sequence changes sign exactly twice;
        // vertical edges see a constant.
        let eps = 0.5;
        let lattice = Lattice::face_centered_square(eps).unwrap();
        let window = Box2::centered(1.0).unwrap();
        let e = enumerate(&lattice, &window);
        let k = 8;
        let pts = edge_subsample_points(&e, k);
        // Reduce the phase mod 1 before scaling by 2 pi so the corner values
        // are exactly zero rather than sin(2 pi m) noise of either sign.
        let values: Vec<f64> = pts
            .iter()
            .map(|p| (2.0 * std::f64::consts::PI * (p[0] / eps).rem_euclid(1.0)).sin())
            .collect();
        let mut horizontal = 0;
        let mut vertical = 0;
        for (idx, &(a, b)) in e.edges.iter().enumerate() {
            let pa = e.points[a as usize];
            let pb = e.points[b as usize];
            let chunk = &values[idx * (k + 2)..(idx + 1) * (k + 2)];
            if pa[1] == pb[1] {
                horizontal += 1;
                assert_eq!(
                    sign_changes(chunk),
                    2,
                    "full-period edge from {pa:?} to {pb:?}"
                );
            } else if pa[0] == pb[0] {
                vertical += 1;
                assert_eq!(sign_changes(chunk), 0);
            }
        }
        assert!(horizontal > 0 && vertical > 0);

        // Constant-sign values flag nothing anywhere.
        let flat = vec![1.0; values.len()];
        assert_eq!(flagged_edge_count(&flat, k).unwrap(), 0);
        assert!(flagged_edge_count(&values[..7], k).is_err());
    }

    proptest! {
        /// Nested subsample refinement (k = 4 points at fifths, k = 9 points
        /// at tenths) never loses a detected double crossing.
        #[test]
        fn census_lower_bound_monotone_under_nested_refinement(
            a in -6.0..6.0f64,
            b in -6.0..6.0f64,
            c in -3.0..3.0f64,
        ) {
            let lattice = Lattice::face_centered_square(1.0).unwrap();
            let window = Box2::centered(2.0).unwrap();
            let e = enumerate(&lattice, &window);
            let eval = |p: &[f64; 2]| (a * p[0] + b * p[1] + c).sin() + 0.3 * (b * p[0] - a * p[1]).cos();
            let coarse: Vec<f64> = edge_subsample_points(&e, 4).iter().map(&eval).collect();
            let fine: Vec<f64> = edge_subsample_points(&e, 9).iter().map(&eval).collect();
            let n_coarse = flagged_edge_count(&coarse, 4).unwrap();
            let n_fine = flagged_edge_count(&fine, 9).unwrap();
            prop_assert!(
                n_coarse <= n_fine,
                "refinement lost flags: {} at k=4 vs {} at k=9",
                n_coarse,
                n_fine
            );
        }
    }

    #[test]
    fn census_runs_and_respects_the_memory_cap() {
        let kernel = Kernel::bargmann_fock();
        let report =
            double_crossing_census(&kernel, 0.5, 2.0, 4, 40, 9, 1 << 30).unwrap();
        assert!(report.edges_total > 0);
        assert_eq!(report.replicates, 40);
        assert!(report.p_none_hat >= 0.0 && report.p_none_hat <= 1.0);
        assert!(report.wilson_lo <= report.p_none_hat && report.p_none_hat <= report.wilson_hi);
        assert!(report.lower_bound_only);
        assert!((report.pitch - 0.05).abs() < 1e-15);

        match double_crossing_census(&kernel, 0.125, 5.0, 24, 4, 9, 1 << 22)
            .err()
            .expect("cap must trip")
        {
            Error::Resource { suggestion, .. } => assert!(suggestion.contains("tile")),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(double_crossing_census(&kernel, 0.5, 2.0, 3, 4, 9, 1 << 30).is_err());
    }

    #[test]
    fn supnorm_maxima_nest_and_ratio_is_tame() {
        let kernel = Kernel::bargmann_fock();
        let rows = supnorm_statistic(&kernel, &[2.0, 3.0, 4.0], 0.25, 24, 33).unwrap();
        // Nondecreasing means by nested per-sample maxima.
        for w in rows.windows(2) {
            assert!(w[1].mean_max >= w[0].mean_max);
        }
        for row in &rows {
            assert!(row.mean_max.is_finite() && row.mean_max > 0.0);
            assert!(row.ratio_to_sqrt_log > 0.0);
        }
        assert!(supnorm_statistic(&kernel, &[1.0, 4.0], 0.25, 8, 1).is_err());
        assert!(supnorm_statistic(&kernel, &[4.0, 2.0], 0.25, 8, 1).is_err());
    }

    #[test]
    fn transversality_minima_shrink_and_phi_moment_is_stable() {
        let kernel = Kernel::bargmann_fock();
        let stats =
            transversality_statistic(&kernel, &[2.0, 3.0], 0.1, 10, 21, 0.05, 1.0).unwrap();
        // Larger boxes can only lower the minimum, sample by sample, so the
        // medians are ordered too.
        let median = |row: &TransversalityRow| {
            row.quantiles.iter().find(|q| q.0 == 0.5).unwrap().1
        };
        assert!(median(&stats.rows[1]) <= median(&stats.rows[0]));
        // mu calibration recorded at the requested quantile level.
        for row in &stats.rows {
            assert!(row.mu_calibrated.is_finite() && row.mu_calibrated > 0.0);
        }
        // The reciprocal moment stays finite and concentrated: the standard
        // error across runs is small next to the mean.
        assert!(stats.e_phi_half.is_finite() && stats.e_phi_half > 0.0);
        assert!(
            stats.phi_std_error < 2.0 * stats.e_phi_half,
            "Phi moment failed to stabilize: {} +- {}",
            stats.e_phi_half,
            stats.phi_std_error
        );
        // Centered differences at step h carry an O(h^2) truncation error.
        assert_eq!(stats.curvature_error, 0.1 * 0.1);
    }

    #[test]
    fn critical_census_trivial_cases_and_resolution_guard() {
        let kernel = Kernel::bargmann_fock();
        let zero = near_edge_critical_census(
            &kernel,
            0.5,
            0.0,
            2.0,
            Direction::XAxis,
            0.05,
            4,
            5,
        )
        .unwrap();
        assert_eq!(zero.mean_count, 0.0);
        assert_eq!(zero.std_error, 0.0);

        match near_edge_critical_census(
            &kernel,
            0.5,
            0.05,
            2.0,
            Direction::XAxis,
            0.05,
            4,
            5,
        )
        .err()
        .expect("coarse auxiliary grid must be rejected")
        {
            Error::Resolution(msg) => assert!(msg.contains("theta/2")),
            other => panic!("unexpected error {other:?}"),
        }

        let census = near_edge_critical_census(
            &kernel,
            0.5,
            0.2,
            2.0,
            Direction::XAxis,
            0.05,
            6,
            5,
        )
        .unwrap();
        assert!(census.mean_count >= 0.0);
        assert!(census.mean_count.is_finite());
    }

    #[test]
    fn line_distance_families() {
        let eps = 0.5;
        // On an edge-carrying line.
        assert_eq!(Direction::XAxis.line_distance([0.3, 1.0], eps), 0.0);
        assert!((Direction::XAxis.line_distance([0.3, 1.1], eps) - 0.1).abs() < 1e-12);
        assert_eq!(Direction::YAxis.line_distance([1.5, 0.2], eps), 0.0);
        // Diagonal families measure perpendicular distance.
        assert_eq!(Direction::DiagUp.line_distance([0.25, 0.75], eps), 0.0);
        let d = Direction::DiagUp.line_distance([0.25, 0.85], eps);
        assert!((d - 0.1 / std::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(Direction::DiagDown.line_distance([0.25, 0.25], eps), 0.0);
    }
}
