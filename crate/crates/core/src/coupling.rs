//! Total-variation distance between the sign patterns of two block-coupled
//! Gaussian vectors.
//!
//! A [`BlockGaussian`] describes a centered Gaussian vector `(X, Y)` in
//! dimension `m + n` whose marginal covariances `Sigma1` (for `X`) and
//! `Sigma2` (for `Y`) have unit diagonals, together with the cross-covariance
//! block `Sigma12`.  The quantity of interest is the total-variation distance
//! between the law of the joint sign pattern `(sgn X, sgn Y)` and the law it
//! would have if the two blocks were independent.  Sign patterns live on a
//! finite set of size `2^(m+n)`, so the distance is
//!
//! ```text
//! TV = 1/2 * sum over patterns |P_joint(pattern) - P_indep(pattern)|
//! ```
//!
//! and each pattern probability is a Gaussian orthant probability of a
//! sign-flipped covariance matrix.  Orthant probabilities are evaluated by
//! splitting the covariance support graph into connected components (the
//! orthant probability factorizes across independent components), applying
//! closed forms in dimension at most three, and falling back to randomized
//! quasi-Monte Carlo sequential conditioning for larger coupled components.

use crate::percolation::UnionFind;
use crate::sampler::rng_stream;
use crate::{Error, Result};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Largest joint dimension `m + n` for which exact pattern enumeration is
/// offered; beyond this the `2^(m+n)` sum is better served by sampling.
pub const MAX_EXACT_DIM: usize = 12;

/// Default quadrature tolerance for [`tv_exact`].
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// RNG lane reserved for the Monte-Carlo total-variation estimator.
const LANE_COUPLING: u64 = 6;
/// RNG lane reserved for quasi-Monte-Carlo shift randomization.
const LANE_QMC_SHIFT: u64 = 7;

/// Centered Gaussian pair `(X, Y)` with unit-variance coordinates.
#[derive(Debug, Clone)]
pub struct BlockGaussian {
    m: usize,
    n: usize,
    sigma1: DMatrix<f64>,
    sigma2: DMatrix<f64>,
    sigma12: DMatrix<f64>,
    eta: f64,
}

impl BlockGaussian {
    /// Validates the three covariance blocks and assembles the pair.
    ///
    /// `sigma1` must be `m x m`, `sigma2` must be `n x n`, both symmetric with
    /// unit diagonals, `sigma12` must be `m x n`, and the assembled
    /// `(m+n) x (m+n)` covariance must be positive semidefinite.  The coupling
    /// strength `eta` is read off as the largest absolute cross-covariance
    /// entry rather than supplied by the caller.
    pub fn new(
        sigma1: DMatrix<f64>,
        sigma2: DMatrix<f64>,
        sigma12: DMatrix<f64>,
    ) -> Result<Self> {
        let m = sigma1.nrows();
        let n = sigma2.nrows();
        if m == 0 || n == 0 {
            return Err(Error::Validation(
                "both blocks must have at least one coordinate".into(),
            ));
        }
        check_marginal(&sigma1, "sigma1")?;
        check_marginal(&sigma2, "sigma2")?;
        if sigma12.nrows() != m || sigma12.ncols() != n {
            return Err(Error::Validation(format!(
                "sigma12 must be {m} x {n}, got {} x {}",
                sigma12.nrows(),
                sigma12.ncols()
            )));
        }
        let eta = sigma12.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let bg = Self {
            m,
            n,
            sigma1,
            sigma2,
            sigma12,
            eta,
        };
        let full = bg.full_covariance();
        let min_eig = full
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        if min_eig < -1e-9 {
            return Err(Error::Validation(format!(
                "joint covariance is not positive semidefinite (min eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(bg)
    }

    /// Identity marginals with the first `min(m, n)` coordinates of the two
    /// blocks coupled pairwise at correlation `eta`.
    pub fn cross_identity(m: usize, n: usize, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Validation(format!(
                "pair correlation must lie in [0, 1], got {eta}"
            )));
        }
        let mut sigma12 = DMatrix::zeros(m, n);
        for i in 0..m.min(n) {
            sigma12[(i, i)] = eta;
        }
        Self::new(DMatrix::identity(m, m), DMatrix::identity(n, n), sigma12)
    }

    /// Dimension of the first block.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Dimension of the second block.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Largest absolute cross-covariance entry.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Assembles the joint `(m+n) x (m+n)` covariance.
    pub fn full_covariance(&self) -> DMatrix<f64> {
        let d = self.m + self.n;
        let mut full = DMatrix::zeros(d, d);
        full.view_mut((0, 0), (self.m, self.m)).copy_from(&self.sigma1);
        full.view_mut((self.m, self.m), (self.n, self.n))
            .copy_from(&self.sigma2);
        full.view_mut((0, self.m), (self.m, self.n))
            .copy_from(&self.sigma12);
        full.view_mut((self.m, 0), (self.n, self.m))
            .copy_from(&self.sigma12.transpose());
        full
    }

    /// Joint covariance with the cross block zeroed: the independent coupling
    /// of the two marginals.
    pub fn independent_covariance(&self) -> DMatrix<f64> {
        let d = self.m + self.n;
        let mut full = DMatrix::zeros(d, d);
        full.view_mut((0, 0), (self.m, self.m)).copy_from(&self.sigma1);
        full.view_mut((self.m, self.m), (self.n, self.n))
            .copy_from(&self.sigma2);
        full
    }
}

fn check_marginal(sigma: &DMatrix<f64>, name: &str) -> Result<()> {
    if sigma.nrows() != sigma.ncols() {
        return Err(Error::Validation(format!(
            "{name} must be square, got {} x {}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    for i in 0..sigma.nrows() {
        if (sigma[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "{name} must have unit diagonal; entry ({i}, {i}) is {}",
                sigma[(i, i)]
            )));
        }
        for j in 0..i {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 {
                return Err(Error::Validation(format!(
                    "{name} must be symmetric; entries ({i}, {j}) and ({j}, {i}) differ"
                )));
            }
        }
    }
    Ok(())
}

/// Exact total-variation distance together with the quadrature error carried
/// by any orthant evaluations that needed numerical integration.
#[derive(Debug, Clone, Copy)]
pub struct TvExact {
    /// Half the summed absolute pattern-probability differences.
    pub value: f64,
    /// Accumulated bound on the quadrature error of `value`; zero when every
    /// component admitted a closed form.
    pub error_bound: f64,
}

/// Total-variation distance between the joint sign-pattern law and the
/// independent-blocks sign-pattern law, by exact pattern enumeration.
///
/// Fails for `m + n > 12`, where the `2^(m+n)`-term sum stops being the right
/// tool; use [`tv_monte_carlo`] there instead.
pub fn tv_exact(bg: &BlockGaussian) -> Result<TvExact> {
    tv_exact_with_tol(bg, DEFAULT_TOLERANCE)
}

/// [`tv_exact`] with an explicit quadrature tolerance for the orthant
/// integrations of coupled components of dimension four and above.
pub fn tv_exact_with_tol(bg: &BlockGaussian, tol: f64) -> Result<TvExact> {
    let d = bg.m + bg.n;
    if d > MAX_EXACT_DIM {
        return Err(Error::Unsupported(format!(
            "exact enumeration covers m + n <= {MAX_EXACT_DIM}, got {d}; use tv_monte_carlo"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Validation(format!(
            "quadrature tolerance must be positive, got {tol}"
        )));
    }

    let mut joint = OrthantEngine::new(bg.full_covariance());
    let mut indep = OrthantEngine::new(bg.independent_covariance());
    // Only components of dimension four and above carry quadrature error.
    // Each pattern touches each such component exactly once, so the summed
    // error is at most (number of quadrature components) * 2^d per-evaluation
    // tolerances; budget with a factor-two margin.
    let quadrature_components = joint.quadrature_components() + indep.quadrature_components();
    let per_eval_tol = tol / (quadrature_components.max(1) as f64 * (1u64 << d) as f64);
    let mut sum_abs = 0.0;
    let mut err = 0.0;
    for pattern in 0u32..(1u32 << d) {
        let (pj, ej) = joint.pattern_probability(pattern, per_eval_tol)?;
        let (pi, ei) = indep.pattern_probability(pattern, per_eval_tol)?;
        sum_abs += (pj - pi).abs();
        err += ej + ei;
    }
    let result = TvExact {
        value: 0.5 * sum_abs,
        error_bound: 0.5 * err,
    };
    if result.error_bound > tol {
        return Err(Error::Resolution(format!(
            "orthant quadrature reached error bound {:.3e}, above the requested tolerance {tol:.3e}",
            result.error_bound
        )));
    }
    Ok(result)
}

/// Sampling estimate of the sign-pattern total-variation distance.
#[derive(Debug, Clone, Copy)]
pub struct TvEstimate {
    /// Plug-in distance from the empirical pattern frequencies.
    pub estimate: f64,
    /// Standard error across independent sample batches.
    pub std_error: f64,
}

/// Monte-Carlo estimate of the sign-pattern total-variation distance.
///
/// Draws `samples` joint vectors and, from the same underlying standard
/// normals, `samples` independent-blocks vectors; sharing the noise couples
/// the two empirical measures so their plug-in distance concentrates around
/// the true value instead of around the occupancy noise floor.  The standard
/// error comes from splitting the run into sixteen batches.
pub fn tv_monte_carlo(bg: &BlockGaussian, samples: u64, seed: u64) -> Result<TvEstimate> {
    const BATCHES: u64 = 16;
    if samples < BATCHES * 4 {
        return Err(Error::Validation(format!(
            "need at least {} samples for batched error estimation, got {samples}",
            BATCHES * 4
        )));
    }
    let d = bg.m + bg.n;
    if d > 20 {
        return Err(Error::Validation(format!(
            "pattern tabulation covers m + n <= 20, got {d}"
        )));
    }
    let joint_chol = robust_cholesky(&bg.full_covariance())?;
    let chol1 = robust_cholesky(&bg.sigma1)?;
    let chol2 = robust_cholesky(&bg.sigma2)?;

    let per_batch = samples / BATCHES;
    let remainder = samples % BATCHES;
    let batches: Vec<(HashMap<u32, [u64; 2]>, u64)> = (0..BATCHES)
        .into_par_iter()
        .map(|b| {
            let count = per_batch + u64::from(b < remainder);
            let mut rng = rng_stream(seed, LANE_COUPLING, b);
            let mut counts: HashMap<u32, [u64; 2]> = HashMap::new();
            let mut z = vec![0.0_f64; d];
            for _ in 0..count {
                for zi in &mut z {
                    *zi = rand_distr::StandardNormal.sample(&mut rng);
                }
                let joint_pattern = lower_apply_pattern(&joint_chol, &z, 0, d);
                let indep_pattern = lower_apply_pattern(&chol1, &z, 0, bg.m)
                    | (lower_apply_pattern(&chol2, &z[bg.m..], 0, bg.n) << bg.m);
                counts.entry(joint_pattern).or_default()[0] += 1;
                counts.entry(indep_pattern).or_default()[1] += 1;
            }
            (counts, count)
        })
        .collect();

    let mut total: HashMap<u32, [u64; 2]> = HashMap::new();
    let mut batch_tvs = Vec::with_capacity(BATCHES as usize);
    for (counts, count) in &batches {
        let mut sum_abs = 0.0;
        for (pattern, c) in counts {
            sum_abs += (c[0] as f64 - c[1] as f64).abs() / *count as f64;
            let slot = total.entry(*pattern).or_default();
            slot[0] += c[0];
            slot[1] += c[1];
        }
        batch_tvs.push(0.5 * sum_abs);
    }
    let estimate = 0.5
        * total
            .values()
            .map(|c| (c[0] as f64 - c[1] as f64).abs() / samples as f64)
            .sum::<f64>();
    let mean = batch_tvs.iter().sum::<f64>() / batch_tvs.len() as f64;
    let var = batch_tvs
        .iter()
        .map(|t| (t - mean).powi(2))
        .sum::<f64>()
        / (batch_tvs.len() - 1) as f64;
    let std_error = (var / batch_tvs.len() as f64).sqrt();
    Ok(TvEstimate {
        estimate,
        std_error,
    })
}

/// Applies a lower-triangular factor to `z[offset..offset+dim]` and packs the
/// signs of the result into a bitmask (bit `i` set when coordinate `i` is
/// nonnegative).
fn lower_apply_pattern(l: &DMatrix<f64>, z: &[f64], offset: usize, dim: usize) -> u32 {
    let mut pattern = 0u32;
    for i in 0..dim {
        let mut x = 0.0;
        for j in 0..=i {
            x += l[(i, j)] * z[offset + j];
        }
        if x >= 0.0 {
            pattern |= 1 << i;
        }
    }
    pattern
}

/// Cholesky factor with a small diagonal-jitter ladder so that positive
/// semidefinite but singular covariances (perfectly coupled pairs) still
/// admit a sampling factor.
fn robust_cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    for jitter in [0.0, 1e-12, 1e-10, 1e-8] {
        let mut work = cov.clone();
        if jitter > 0.0 {
            for i in 0..work.nrows() {
                work[(i, i)] += jitter;
            }
        }
        if let Some(chol) = work.cholesky() {
            return Ok(chol.l());
        }
    }
    Err(Error::Degenerate(
        "covariance is too far from positive semidefinite to factor".into(),
    ))
}

/// Upper bound `min(1, 2^(14/5) * (m+n)^(8/5) * eta^(1/5))` on the
/// sign-pattern total-variation distance of a block pair whose
/// cross-covariances are all at most `eta` in absolute value.
pub fn bakounine_bound(m: usize, n: usize, eta: f64) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(Error::Validation(
            "both blocks must have at least one coordinate".into(),
        ));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Validation(format!(
            "eta must lie in [0, 1], got {eta}"
        )));
    }
    if eta == 0.0 {
        return Ok(0.0);
    }
    let log = crate::constants::LOG_COUPLING_C
        + 1.6 * ((m + n) as f64).ln()
        + 0.2 * eta.ln();
    Ok(log.exp().min(1.0))
}

/// Orthant-probability engine for one fixed covariance matrix.
///
/// The support graph (an edge wherever a covariance entry is nonzero) is
/// split into connected components once; a sign pattern's probability is the
/// product of per-component orthant probabilities, each of which depends only
/// on the pattern bits inside the component and is memoized.
struct OrthantEngine {
    components: Vec<Vec<usize>>,
    cov: DMatrix<f64>,
    cache: Vec<HashMap<u32, (f64, f64)>>,
}

impl OrthantEngine {
    fn new(cov: DMatrix<f64>) -> Self {
        let d = cov.nrows();
        let mut uf = UnionFind::new(d);
        for i in 0..d {
            for j in 0..i {
                if cov[(i, j)] != 0.0 {
                    uf.union(i as u32, j as u32);
                }
            }
        }
        let mut by_root: HashMap<u32, Vec<usize>> = HashMap::new();
        for i in 0..d {
            by_root.entry(uf.find(i as u32)).or_default().push(i);
        }
        let mut components: Vec<Vec<usize>> = by_root.into_values().collect();
        components.sort_by_key(|c| c[0]);
        let cache = vec![HashMap::new(); components.len()];
        Self {
            components,
            cov,
            cache,
        }
    }

    /// Number of components that need numerical integration rather than a
    /// closed form.
    fn quadrature_components(&self) -> usize {
        self.components.iter().filter(|c| c.len() >= 4).count()
    }

    /// Probability (and quadrature error bound) that a standard draw from the
    /// engine's covariance lands in the orthant described by `pattern` (bit
    /// `i` set means coordinate `i` nonnegative).
    fn pattern_probability(&mut self, pattern: u32, tol: f64) -> Result<(f64, f64)> {
        let mut prob = 1.0;
        let mut err = 0.0;
        for (idx, comp) in self.components.iter().enumerate() {
            let mut local = 0u32;
            for (bit, &coord) in comp.iter().enumerate() {
                if pattern & (1 << coord) != 0 {
                    local |= 1 << bit;
                }
            }
            let (p, e) = match self.cache[idx].get(&local) {
                Some(&v) => v,
                None => {
                    let signs: Vec<f64> = (0..comp.len())
                        .map(|b| if local & (1 << b) != 0 { 1.0 } else { -1.0 })
                        .collect();
                    let mut sub = DMatrix::zeros(comp.len(), comp.len());
                    for (a, &i) in comp.iter().enumerate() {
                        for (b, &j) in comp.iter().enumerate() {
                            sub[(a, b)] = signs[a] * signs[b] * self.cov[(i, j)];
                        }
                    }
                    let v = orthant_nonnegative(&sub, tol)?;
                    self.cache[idx].insert(local, v);
                    v
                }
            };
            // The factors are probabilities, so each term of the product-rule
            // error expansion is bounded by the factor error itself.
            prob *= p;
            err += e;
        }
        Ok((prob, err))
    }
}

/// `P[X_i >= 0 for all i]` for `X ~ N(0, cov)`, with an error bound.
///
/// Dimensions one to three use the arcsine closed forms (error zero up to
/// rounding); higher dimensions use randomized quasi-Monte-Carlo sequential
/// conditioning.
pub fn orthant_nonnegative(cov: &DMatrix<f64>, tol: f64) -> Result<(f64, f64)> {
    match cov.nrows() {
        0 => Ok((1.0, 0.0)),
        1 => Ok((0.5, 0.0)),
        2 => Ok((0.25 + cov[(0, 1)].clamp(-1.0, 1.0).asin() / (2.0 * PI), 0.0)),
        3 => {
            let s = cov[(0, 1)].clamp(-1.0, 1.0).asin()
                + cov[(0, 2)].clamp(-1.0, 1.0).asin()
                + cov[(1, 2)].clamp(-1.0, 1.0).asin();
            Ok((0.125 + s / (4.0 * PI), 0.0))
        }
        _ => orthant_qmc(cov, tol),
    }
}

/// First twelve primes, one square-root lattice generator per dimension.
const LATTICE_PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Sequential-conditioning orthant probability with square-root lattice
/// points under independent random shifts; the spread of the per-shift means
/// gives the error bound.
fn orthant_qmc(cov: &DMatrix<f64>, tol: f64) -> Result<(f64, f64)> {
    const SHIFTS: usize = 10;
    let d = cov.nrows();
    if d > LATTICE_PRIMES.len() {
        return Err(Error::Unsupported(format!(
            "orthant integration covers dimension <= {}, got {d}",
            LATTICE_PRIMES.len()
        )));
    }
    let l = robust_cholesky(cov)?;
    let normal = Normal::standard();
    let generators: Vec<f64> = LATTICE_PRIMES[..d - 1]
        .iter()
        .map(|&p| (p as f64).sqrt())
        .collect();

    let mut points = 4096usize;
    loop {
        let shift_means: Vec<f64> = (0..SHIFTS)
            .into_par_iter()
            .map(|s| {
                let mut rng = rng_stream(0x6f727468, LANE_QMC_SHIFT, s as u64);
                let shift: Vec<f64> = (0..d - 1).map(|_| rng.gen::<f64>()).collect();
                let mut acc = 0.0;
                for k in 0..points {
                    let mut f = 0.5; // width of the first conditioned slab
                    let mut y = [0.0_f64; 16];
                    for i in 1..d {
                        let w = (generators[i - 1] * (k as f64 + 1.0) + shift[i - 1]).fract();
                        // Re-center the previous coordinate inside its slab.
                        let prev_d = {
                            let mut g = 0.0;
                            for j in 0..i - 1 {
                                g += l[(i - 1, j)] * y[j];
                            }
                            normal.cdf(-g / l[(i - 1, i - 1)].max(1e-300))
                        };
                        let u = (prev_d + w * (1.0 - prev_d)).clamp(1e-16, 1.0 - 1e-16);
                        y[i - 1] = normal.inverse_cdf(u);
                        let mut g = 0.0;
                        for j in 0..i {
                            g += l[(i, j)] * y[j];
                        }
                        let di = normal.cdf(-g / l[(i, i)].max(1e-300));
                        f *= 1.0 - di;
                    }
                    acc += f;
                }
                acc / points as f64
            })
            .collect();
        let mean = shift_means.iter().sum::<f64>() / SHIFTS as f64;
        let var = shift_means
            .iter()
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / (SHIFTS - 1) as f64;
        let err = 3.0 * (var / SHIFTS as f64).sqrt();
        if err <= tol || points >= 1 << 17 {
            return Ok((mean, err.max(1e-15)));
        }
        points *= 4;
    }
}
