//! Monte Carlo orchestration: replicate management, Wilson confidence
//! intervals, crossing/annulus/arm/nodal experiments over scale grids,
//! correlation-inequality checks, and one-arm exponent fitting.
//!
//! Replicates are parallelized with replicate-indexed RNG streams and reduced
//! as integer counts, so every table is deterministic for a fixed master seed
//! regardless of thread count or scheduling.

use crate::coloring::Coloring;
use crate::kernels::Kernel;
use crate::lattice::{enumerate, Box2, Enumeration, Lattice};
use crate::percolation::{
    circuit, crosses, one_arm, quad_nodal_crossing, Color, Quad, SidePair,
};
use crate::sampler::{child_seed, rng_stream, CholeskyOracle, CirculantGrid, RasterGrid};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use std::time::Instant;

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.5758293035489008;
/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.9599639845400542;

/// Default cap on transient field-value storage per experiment cell.
pub const DEFAULT_MEMORY_CAP: u64 = 8 * 1024 * 1024 * 1024;

/// RNG lanes for the different experiment drivers; the sampler lanes start
/// at one and the coupling lanes at six, so these continue the sequence.
const LANE_RUN_BASE: u64 = 100;
const LANE_FKG: u64 = 9;
const LANE_POSITIVITY: u64 = 10;
const LANE_BOOTSTRAP: u64 = 11;
const LANE_WHITE_NOISE: u64 = 12;

/// Wilson score interval for `successes` out of `trials` at the two-sided
/// normal quantile `z`.
///
/// The endpoints are the two solutions in `p` of
/// `(p_hat - p)^2 = z^2 p (1 - p) / n`, clamped to the unit interval; unlike
/// the Wald interval they stay honest when `p_hat` sits near zero or one,
/// which is exactly where one-arm probabilities live.
pub fn wilson(successes: u64, trials: u64, z: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::Validation("wilson: need at least one trial".into()));
    }
    if successes > trials {
        return Err(Error::Validation(format!(
            "wilson: successes {successes} exceed trials {trials}"
        )));
    }
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::Validation(format!(
            "wilson: quantile must be positive, got {z}"
        )));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let zz = z * z;
    let denom = 1.0 + zz / n;
    let center = (p + zz / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + zz / (4.0 * n * n)).sqrt() / denom;
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

/// Field law an experiment draws its colorings from.
#[derive(Debug, Clone)]
pub enum FieldSpec {
    /// Stationary Gaussian field with the given covariance kernel, sampled
    /// by circulant embedding on the half-mesh raster.
    Kernel(Kernel),
    /// Every vertex positive: a stub for exercising the plumbing.
    ConstantPositive,
    /// Independent standard normals per vertex: a colorable law with no
    /// spatial correlation at all.
    WhiteNoise,
}

/// Percolation event evaluated at each grid scale.
#[derive(Debug, Clone, Copy)]
pub enum EventSpec {
    /// Monochromatic left-right crossing of `[0, rho*s] x [0, s]`.
    Crossing { rho: f64, color: Color },
    /// Monochromatic circuit in the annulus between half-sides `s` and
    /// `ratio * s`.
    Circuit { ratio: f64, color: Color },
    /// Arm of the given color from the boundary of the box of half-side
    /// `inner` to the boundary of the box of half-side `s` (the grid scale).
    OneArm { inner: f64, color: Color },
    /// Black crossing above a white crossing in `[0, rho*s] x [0, s]`,
    /// the discrete trap that forces a nodal line through the quad.
    NodalQuad { rho: f64, gap: f64 },
}

/// A full experiment description: field law, mesh, event, scale grid,
/// replication depth, and master seed.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub field: FieldSpec,
    pub mesh_eps: f64,
    pub event: EventSpec,
    pub scales: Vec<f64>,
    pub replicates: u64,
    pub master_seed: u64,
    /// Normal quantile for the per-row Wilson intervals.
    pub confidence_z: f64,
    /// Cap on transient field storage; exceeding it fails before sampling.
    pub memory_cap_bytes: u64,
}

impl Experiment {
    pub fn new(
        field: FieldSpec,
        mesh_eps: f64,
        event: EventSpec,
        scales: Vec<f64>,
        replicates: u64,
        master_seed: u64,
    ) -> Self {
        Experiment {
            field,
            mesh_eps,
            event,
            scales,
            replicates,
            master_seed,
            confidence_z: Z_99,
            memory_cap_bytes: DEFAULT_MEMORY_CAP,
        }
    }
}

/// One scale cell of an estimate table.
#[derive(Debug, Clone)]
pub struct EstimateRow {
    pub scale: f64,
    pub successes: u64,
    pub replicates: u64,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    /// Wall-clock seconds for the cell; excluded from reproducibility
    /// comparisons.
    pub wall_time_s: f64,
}

/// Estimates over a scale grid, one row per cell.
#[derive(Debug, Clone)]
pub struct EstimateTable {
    pub rows: Vec<EstimateRow>,
}

impl EstimateTable {
    /// Equality of everything except wall time, the one field that is not a
    /// pure function of the experiment.
    pub fn same_estimates(&self, other: &EstimateTable) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.scale == b.scale
                    && a.successes == b.successes
                    && a.replicates == b.replicates
                    && a.p_hat == b.p_hat
                    && a.wilson_lo == b.wilson_lo
                    && a.wilson_hi == b.wilson_hi
            })
    }
}

/// Geometry of one experiment cell: the enumeration window and the event
/// closure over a coloring.
struct CellPlan {
    window: Box2,
    event: CellEvent,
}

enum CellEvent {
    Crossing { quad: Quad, color: Color },
    Circuit { s: f64, t: f64, color: Color },
    OneArm { s: f64, t: f64, color: Color },
    NodalQuad { quad: Quad, gap: f64 },
}

impl CellEvent {
    fn evaluate(&self, e: &Enumeration, c: &Coloring) -> Result<bool> {
        Ok(match self {
            CellEvent::Crossing { quad, color } => crosses(e, c, quad, *color, false)?.occurred,
            CellEvent::Circuit { s, t, color } => circuit(e, c, *s, *t, *color)?.occurred,
            CellEvent::OneArm { s, t, color } => one_arm(e, c, *s, *t, *color, false)?.occurred,
            CellEvent::NodalQuad { quad, gap } => {
                quad_nodal_crossing(e, c, quad, *gap, false)?.occurred
            }
        })
    }
}

fn plan_cell(event: &EventSpec, scale: f64, mesh_eps: f64) -> Result<CellPlan> {
    let slack = mesh_eps;
    Ok(match *event {
        EventSpec::Crossing { rho, color } => {
            if !(rho > 0.0) {
                return Err(Error::Validation(format!(
                    "crossing: aspect ratio must be positive, got {rho}"
                )));
            }
            let quad = Quad::new(0.0, rho * scale, 0.0, scale, SidePair::LeftRight)?;
            let half = (rho * scale).max(scale) / 2.0 + slack;
            CellPlan {
                window: Box2::new([rho * scale / 2.0, scale / 2.0], half)?,
                event: CellEvent::Crossing { quad, color },
            }
        }
        EventSpec::Circuit { ratio, color } => {
            if !(ratio > 1.0) {
                return Err(Error::Validation(format!(
                    "circuit: outer/inner ratio must exceed one, got {ratio}"
                )));
            }
            let t = ratio * scale;
            CellPlan {
                window: Box2::centered(t + slack)?,
                event: CellEvent::Circuit { s: scale, t, color },
            }
        }
        EventSpec::OneArm { inner, color } => {
            if !(inner >= 1.0 && inner < scale) {
                return Err(Error::Validation(format!(
                    "one-arm: need 1 <= inner < scale, got inner={inner}, scale={scale}"
                )));
            }
            CellPlan {
                window: Box2::centered(scale + slack)?,
                event: CellEvent::OneArm { s: inner, t: scale, color },
            }
        }
        EventSpec::NodalQuad { rho, gap } => {
            if !(rho > 0.0) {
                return Err(Error::Validation(format!(
                    "nodal quad: aspect ratio must be positive, got {rho}"
                )));
            }
            let quad = Quad::new(0.0, rho * scale, 0.0, scale, SidePair::LeftRight)?;
            let half = (rho * scale).max(scale) / 2.0 + slack;
            CellPlan {
                window: Box2::new([rho * scale / 2.0, scale / 2.0], half)?,
                event: CellEvent::NodalQuad { quad, gap },
            }
        }
    })
}

/// Per-replicate coloring source prepared once per cell.
enum CellSampler {
    Circulant {
        grid: CirculantGrid,
        vertex_indices: Vec<usize>,
    },
    ConstantPositive,
    WhiteNoise,
}

impl CellSampler {
    fn prepare(
        field: &FieldSpec,
        e: &Enumeration,
        mesh_eps: f64,
        window: &Box2,
        cap_bytes: u64,
    ) -> Result<CellSampler> {
        match field {
            FieldSpec::ConstantPositive => Ok(CellSampler::ConstantPositive),
            FieldSpec::WhiteNoise => Ok(CellSampler::WhiteNoise),
            FieldSpec::Kernel(kernel) => {
                // Every lattice point is an integer multiple of half the
                // mesh, so a raster at that pitch carries the joint sample
                // for all vertices; index lookup is exact integer key
                // arithmetic, never float rounding.
                let raster = RasterGrid::covering(window, mesh_eps / 2.0)?;
                check_memory(&raster, cap_bytes)?;
                let grid = CirculantGrid::auto(kernel, &raster)?;
                let raster = grid.grid().clone();
                let mut vertex_indices = Vec::with_capacity(e.points.len());
                for &(i, j) in &e.keys {
                    let ix = i - raster.i0;
                    let iy = j - raster.j0;
                    if ix < 0 || iy < 0 || ix as usize >= raster.nx || iy as usize >= raster.ny {
                        return Err(Error::Validation(format!(
                            "raster of window does not cover lattice key ({i}, {j})"
                        )));
                    }
                    vertex_indices.push(raster.index(ix as usize, iy as usize));
                }
                Ok(CellSampler::Circulant { grid, vertex_indices })
            }
        }
    }

    fn coloring(&self, e: &Enumeration, seed: u64) -> Coloring {
        match self {
            CellSampler::ConstantPositive => {
                Coloring::from_signs(std::iter::repeat(true).take(e.points.len()))
            }
            CellSampler::WhiteNoise => {
                let mut rng = rng_stream(seed, LANE_WHITE_NOISE, 0);
                Coloring::from_signs(
                    (0..e.points.len()).map(|_| rng.sample::<f64, _>(StandardNormal) >= 0.0),
                )
            }
            CellSampler::Circulant { grid, vertex_indices } => {
                let field = grid.sample(seed);
                Coloring::from_signs(vertex_indices.iter().map(|&i| field.values[i] >= 0.0))
            }
        }
    }
}

/// Rejects rasters whose circulant workspace would exceed the cap, before
/// any spectrum is computed. The estimate covers the padded torus spectrum,
/// the transform buffer, and the output field, all complex-valued.
pub(crate) fn check_memory(raster: &RasterGrid, cap_bytes: u64) -> Result<()> {
    let n = raster.nx.max(raster.ny);
    let torus = (2 * n).next_power_of_two() as u64;
    let needed = torus * torus * 16 * 3;
    if needed > cap_bytes {
        return Err(Error::Resource {
            needed_bytes: needed,
            cap_bytes,
            suggestion: "tile the box into smaller windows or coarsen the mesh".into(),
        });
    }
    Ok(())
}

/// Runs the experiment: one Wilson row per scale, replicates parallelized,
/// deterministic for a fixed master seed.
pub fn run(exp: &Experiment) -> Result<EstimateTable> {
    if exp.replicates < 100 {
        return Err(Error::Validation(format!(
            "need at least 100 replicates, got {}",
            exp.replicates
        )));
    }
    if exp.scales.is_empty() {
        return Err(Error::Validation("scale grid is empty".into()));
    }
    if exp.scales.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Validation(
            "scale grid must be strictly increasing".into(),
        ));
    }
    let lattice = Lattice::face_centered_square(exp.mesh_eps)?;

    // Fail on the memory cap for every cell before sampling the first one.
    let mut plans = Vec::with_capacity(exp.scales.len());
    for &scale in &exp.scales {
        let plan = plan_cell(&exp.event, scale, exp.mesh_eps)?;
        if let FieldSpec::Kernel(_) = exp.field {
            let raster = RasterGrid::covering(&plan.window, exp.mesh_eps / 2.0)?;
            check_memory(&raster, exp.memory_cap_bytes)?;
        }
        plans.push(plan);
    }

    let mut rows = Vec::with_capacity(exp.scales.len());
    for (cell, (plan, &scale)) in plans.iter().zip(&exp.scales).enumerate() {
        let start = Instant::now();
        let e = enumerate(&lattice, &plan.window);
        if e.points.is_empty() {
            return Err(Error::Validation(format!(
                "scale {scale}: window contains no lattice vertices"
            )));
        }
        let sampler = CellSampler::prepare(
            &exp.field,
            &e,
            exp.mesh_eps,
            &plan.window,
            exp.memory_cap_bytes,
        )?;
        let lane = LANE_RUN_BASE + cell as u64;
        let successes = (0..exp.replicates)
            .into_par_iter()
            .map(|r| {
                let coloring = sampler.coloring(&e, child_seed(exp.master_seed, lane, r));
                plan.event.evaluate(&e, &coloring).map(u64::from)
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        let p_hat = successes as f64 / exp.replicates as f64;
        let (wilson_lo, wilson_hi) = wilson(successes, exp.replicates, exp.confidence_z)?;
        rows.push(EstimateRow {
            scale,
            successes,
            replicates: exp.replicates,
            p_hat,
            wilson_lo,
            wilson_hi,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok(EstimateTable { rows })
}

/// One cell of a one-arm decay table: probability of an arm from half-side
/// `s` out to half-side `t`.
#[derive(Debug, Clone, Copy)]
pub struct ArmCell {
    pub s: f64,
    pub t: f64,
    pub pi_hat: f64,
    pub replicates: u64,
}

/// Fitted decay exponent with a bootstrap confidence interval.
#[derive(Debug, Clone)]
pub struct ArmFit {
    pub eta_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Cells dropped because their estimate was exactly zero.
    pub excluded: usize,
    pub used: usize,
    pub warnings: Vec<String>,
}

fn slope_of(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let sxy = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    sxy / sxx
}

/// Least-squares slope of `log pi_hat` against `log (s/t)`, with a
/// parametric-bootstrap percentile confidence interval: each bootstrap round
/// redraws every cell count from a binomial at the observed rate and refits.
pub fn fit_one_arm(cells: &[ArmCell], bootstrap: u32, seed: u64) -> Result<ArmFit> {
    let mut warnings = Vec::new();
    let mut usable = Vec::new();
    for c in cells {
        if !(c.s > 0.0 && c.t > c.s) {
            return Err(Error::Validation(format!(
                "arm cell: need 0 < s < t, got s={}, t={}",
                c.s, c.t
            )));
        }
        if !(0.0..=1.0).contains(&c.pi_hat) {
            return Err(Error::Validation(format!(
                "arm cell: pi_hat out of range: {}",
                c.pi_hat
            )));
        }
        if c.pi_hat == 0.0 {
            warnings.push(format!(
                "cell (s={}, t={}) has zero estimate and was excluded from the fit",
                c.s, c.t
            ));
        } else {
            usable.push(*c);
        }
    }
    if usable.len() < 4 {
        return Err(Error::Validation(format!(
            "need at least 4 cells with positive estimates, have {}",
            usable.len()
        )));
    }
    let points: Vec<(f64, f64)> = usable
        .iter()
        .map(|c| ((c.s / c.t).ln(), c.pi_hat.ln()))
        .collect();
    let eta_hat = slope_of(&points);

    let mut slopes: Vec<f64> = (0..bootstrap)
        .into_par_iter()
        .filter_map(|b| {
            let mut rng = rng_stream(seed, LANE_BOOTSTRAP, b as u64);
            let resampled: Vec<(f64, f64)> = usable
                .iter()
                .filter_map(|c| {
                    let draw = Binomial::new(c.replicates, c.pi_hat)
                        .expect("rate validated above")
                        .sample(&mut rng);
                    (draw > 0).then(|| ((c.s / c.t).ln(), (draw as f64 / c.replicates as f64).ln()))
                })
                .collect();
            (resampled.len() >= 2).then(|| slope_of(&resampled))
        })
        .collect();
    if slopes.len() < 10 {
        return Err(Error::Degenerate(
            "bootstrap produced too few usable resamples; estimates are too close to zero".into(),
        ));
    }
    slopes.sort_by(|a, b| a.total_cmp(b));
    let lo_idx = ((slopes.len() as f64) * 0.025).floor() as usize;
    let hi_idx = (((slopes.len() as f64) * 0.975).ceil() as usize).min(slopes.len()) - 1;
    Ok(ArmFit {
        eta_hat,
        ci_lo: slopes[lo_idx],
        ci_hi: slopes[hi_idx],
        excluded: warnings.len(),
        used: usable.len(),
        warnings,
    })
}

/// Joint and product probabilities of two increasing crossing events.
#[derive(Debug, Clone, Copy)]
pub struct FkgReport {
    pub p_joint: f64,
    pub p_a: f64,
    pub p_b: f64,
    /// `p_joint - p_a * p_b`; nonnegative in expectation for increasing
    /// events under a positively associated law.
    pub margin: f64,
    pub std_error: f64,
    pub replicates: u64,
}

/// Estimates `P[A and B] - P[A] P[B]` for two black crossing events on
/// non-overlapping quads, with a batch standard error.
///
/// Only black crossings are accepted: a white crossing is a decreasing event
/// of the coloring and the positive-association inequality does not apply.
pub fn fkg_check(
    field: &FieldSpec,
    mesh_eps: f64,
    quad_a: &Quad,
    quad_b: &Quad,
    replicates: u64,
    seed: u64,
) -> Result<FkgReport> {
    const BATCHES: u64 = 16;
    if replicates < BATCHES * 8 {
        return Err(Error::Validation(format!(
            "need at least {} replicates for batched errors, got {replicates}",
            BATCHES * 8
        )));
    }
    if quads_overlap(quad_a, quad_b) {
        return Err(Error::Validation(
            "the two event regions overlap; the check wants disjoint regions".into(),
        ));
    }
    let x0 = quad_a.x0.min(quad_b.x0);
    let x1 = quad_a.x1.max(quad_b.x1);
    let y0 = quad_a.y0.min(quad_b.y0);
    let y1 = quad_a.y1.max(quad_b.y1);
    let center = [(x0 + x1) / 2.0, (y0 + y1) / 2.0];
    let half = ((x1 - x0).max(y1 - y0)) / 2.0 + mesh_eps;
    let window = Box2::new(center, half)?;
    let lattice = Lattice::face_centered_square(mesh_eps)?;
    let e = enumerate(&lattice, &window);
    let sampler = CellSampler::prepare(field, &e, mesh_eps, &window, DEFAULT_MEMORY_CAP)?;

    let per_batch = replicates / BATCHES;
    let remainder = replicates % BATCHES;
    let counts: Vec<Result<[u64; 3]>> = (0..BATCHES)
        .into_par_iter()
        .map(|b| {
            let n = per_batch + u64::from(b < remainder);
            let mut c = [0u64; 3];
            for r in 0..n {
                let coloring =
                    sampler.coloring(&e, child_seed(seed, LANE_FKG, b * replicates + r));
                let a = crosses(&e, &coloring, quad_a, Color::Black, false)?.occurred;
                let bb = crosses(&e, &coloring, quad_b, Color::Black, false)?.occurred;
                c[0] += u64::from(a);
                c[1] += u64::from(bb);
                c[2] += u64::from(a && bb);
            }
            Ok(c)
        })
        .collect();

    let mut totals = [0u64; 3];
    let mut batch_margins = Vec::with_capacity(BATCHES as usize);
    for (b, c) in counts.into_iter().enumerate() {
        let c = c?;
        let n = (per_batch + u64::from((b as u64) < remainder)) as f64;
        batch_margins.push(c[2] as f64 / n - (c[0] as f64 / n) * (c[1] as f64 / n));
        for (t, v) in totals.iter_mut().zip(c) {
            *t += v;
        }
    }
    let n = replicates as f64;
    let (p_a, p_b, p_joint) = (totals[0] as f64 / n, totals[1] as f64 / n, totals[2] as f64 / n);
    let mean = batch_margins.iter().sum::<f64>() / batch_margins.len() as f64;
    let var = batch_margins.iter().map(|m| (m - mean).powi(2)).sum::<f64>()
        / (batch_margins.len() - 1) as f64;
    Ok(FkgReport {
        p_joint,
        p_a,
        p_b,
        margin: p_joint - p_a * p_b,
        std_error: (var / batch_margins.len() as f64).sqrt(),
        replicates,
    })
}

fn quads_overlap(a: &Quad, b: &Quad) -> bool {
    a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1
}

/// Positivity probability of the field on the vertices of a small box.
#[derive(Debug, Clone, Copy)]
pub struct PositivityRow {
    pub lambda: f64,
    pub successes: u64,
    pub replicates: u64,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

/// Estimates `P[f > 0 on the vertices of B_lambda]` over a grid of box
/// half-sides in `(0, 1]`.
///
/// All boxes are evaluated on one joint sample per replicate, so the rows are
/// exactly nested: positivity on a larger box implies positivity on every
/// smaller one, replicate by replicate, and the estimates are monotone
/// nonincreasing in `lambda` by construction.
pub fn small_box_positivity(
    kernel: &Kernel,
    lambdas: &[f64],
    mesh_eps: f64,
    replicates: u64,
    seed: u64,
) -> Result<Vec<PositivityRow>> {
    if lambdas.is_empty() {
        return Err(Error::Validation("lambda grid is empty".into()));
    }
    if lambdas.iter().any(|&l| !(l > 0.0 && l <= 1.0)) {
        return Err(Error::Validation(
            "lambda grid must lie in (0, 1]".into(),
        ));
    }
    if lambdas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Validation(
            "lambda grid must be strictly increasing".into(),
        ));
    }
    if replicates == 0 {
        return Err(Error::Validation("need at least one replicate".into()));
    }
    let lattice = Lattice::face_centered_square(mesh_eps)?;
    let lambda_max = *lambdas.last().expect("nonempty");
    let window = Box2::centered(lambda_max + mesh_eps / 4.0)?;
    let e = enumerate(&lattice, &window);
    let tol = mesh_eps * 1e-9;
    let member_sets: Vec<Vec<usize>> = lambdas
        .iter()
        .map(|&l| {
            (0..e.points.len())
                .filter(|&v| {
                    let p = e.points[v];
                    p[0].abs() <= l + tol && p[1].abs() <= l + tol
                })
                .collect()
        })
        .collect();
    if member_sets[0].is_empty() {
        return Err(Error::Validation(format!(
            "smallest box {} contains no lattice vertex at mesh {mesh_eps}",
            lambdas[0]
        )));
    }
    let oracle = CholeskyOracle::new(kernel, &e.points)?;
    let successes = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let field = oracle.sample(child_seed(seed, LANE_POSITIVITY, r));
            let mut hits = vec![0u64; lambdas.len()];
            for (slot, members) in hits.iter_mut().zip(&member_sets) {
                *slot = u64::from(members.iter().all(|&v| field.values[v] > 0.0));
            }
            hits
        })
        .reduce(
            || vec![0u64; lambdas.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    lambdas
        .iter()
        .zip(successes)
        .map(|(&lambda, k)| {
            let (wilson_lo, wilson_hi) = wilson(k, replicates, Z_95)?;
            Ok(PositivityRow {
                lambda,
                successes: k,
                replicates,
                p_hat: k as f64 / replicates as f64,
                wilson_lo,
                wilson_hi,
            })
        })
        .collect()
}
