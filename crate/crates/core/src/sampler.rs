//! Gaussian field samplers.
//!
//! Four routes to a sample, trading generality for speed:
//! an exact Cholesky oracle for arbitrary small point sets, a circulant
//! embedding FFT sampler for regular grids, truncated series samplers for
//! the entire-function and projective-polynomial models, and a plane-wave
//! superposition whose covariance is exactly the Bessel kernel at any
//! superposition count.
//!
//! Everything is deterministic: a sample is a pure function of
//! (seed, method, points, kernel), and independent replicate streams are
//! derived by hashing (seed, lane, replicate).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use statrs::function::gamma::ln_gamma;
use std::sync::Arc;

use crate::kernels::Kernel;
use crate::lattice::Box2;
use crate::{Error, Result};

/// How a sample was produced, with the method-specific diagnostics needed
/// to interpret it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleMethod {
    Cholesky,
    Circulant { padding: usize, min_eigenvalue: f64, clipped_mass: f64 },
    Series { degree: u32 },
    Wave { count: u32 },
    Kostlan { degree: u32 },
}

/// A field sampled at finitely many points.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub points: Vec<[f64; 2]>,
    pub values: Vec<f64>,
    pub seed: u64,
    pub method: SampleMethod,
}

impl FieldSample {
    /// Restrict the sample to a subset of its points.
    pub fn gather(&self, indices: &[usize]) -> FieldSample {
        FieldSample {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            values: indices.iter().map(|&i| self.values[i]).collect(),
            seed: self.seed,
            method: self.method,
        }
    }
}

// splitmix64 finalizer: a cheap, well-mixed 64-bit hash step.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent child seed for (lane, replicate) under a master
/// seed. Lanes separate unrelated uses of the same master seed; replicates
/// index Monte Carlo repetitions.
pub fn child_seed(master: u64, lane: u64, replicate: u64) -> u64 {
    let h0 = mix(master.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let h1 = mix(h0 ^ lane.wrapping_add(0xBF58_476D_1CE4_E5B9));
    mix(h1 ^ replicate.wrapping_add(0x94D0_49BB_1331_11EB))
}

/// Deterministic RNG stream for (seed, lane, replicate).
pub fn rng_stream(seed: u64, lane: u64, replicate: u64) -> ChaCha8Rng {
    let mut s = child_seed(seed, lane, replicate);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        s = mix(s.wrapping_add(0x9E37_79B9_7F4A_7C15));
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

const LANE_CHOLESKY: u64 = 1;
const LANE_CIRCULANT: u64 = 2;
const LANE_SERIES: u64 = 3;
const LANE_KOSTLAN: u64 = 4;
const LANE_WAVE: u64 = 5;

fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Exact sampler for a centered Gaussian vector with covariance
/// `K(x_i - x_j)`: the ground truth every other sampler is audited against.
pub struct CholeskyOracle {
    points: Vec<[f64; 2]>,
    factor: DMatrix<f64>,
    target: DMatrix<f64>,
}

impl CholeskyOracle {
    /// Factor the covariance of `points` under `kernel`. At most 4096
    /// points; a diagonal jitter up to 1e-10 is tried before declaring the
    /// configuration degenerate (e.g. coincident points).
    pub fn new(kernel: &Kernel, points: &[[f64; 2]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Validation("points: empty configuration".into()));
        }
        if points.len() > 4096 {
            return Err(Error::Validation(format!(
                "points: {} exceeds the 4096-point oracle limit",
                points.len()
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(points.len());
        for p in points {
            if !seen.insert((p[0].to_bits(), p[1].to_bits())) {
                return Err(Error::Degenerate(format!(
                    "coincident points at [{}, {}] make the covariance rank-deficient",
                    p[0], p[1]
                )));
            }
        }
        let n = points.len();
        let target = DMatrix::from_fn(n, n, |i, j| {
            kernel
                .eval_offset([points[i][0] - points[j][0], points[i][1] - points[j][1]])
                .value
        });
        for jitter in [0.0, 1e-12, 1e-10] {
            let mut m = target.clone();
            for d in 0..n {
                m[(d, d)] += jitter;
            }
            if let Some(chol) = m.cholesky() {
                return Ok(CholeskyOracle { points: points.to_vec(), factor: chol.l(), target });
            }
        }
        Err(Error::Degenerate(
            "covariance not positive definite after diagonal jitter 1e-10 \
             (coincident or near-coincident points?)"
                .into(),
        ))
    }

    /// The exact covariance matrix being sampled.
    pub fn target(&self) -> &DMatrix<f64> {
        &self.target
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// The field is linear in the underlying standard normals, which makes
    /// sign symmetry (`f(-z) = -f(z)`) exact and testable.
    pub fn sample_from_normals(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.points.len());
        (&self.factor * DVector::from_column_slice(z)).data.into()
    }

    pub fn sample(&self, seed: u64) -> FieldSample {
        let mut rng = rng_stream(seed, LANE_CHOLESKY, 0);
        let z = standard_normals(&mut rng, self.points.len());
        FieldSample {
            points: self.points.clone(),
            values: self.sample_from_normals(&z),
            seed,
            method: SampleMethod::Cholesky,
        }
    }
}

pub fn sample_cholesky(kernel: &Kernel, points: &[[f64; 2]], seed: u64) -> Result<FieldSample> {
    Ok(CholeskyOracle::new(kernel, points)?.sample(seed))
}

/// Regular grid of points `(i0 + ix, j0 + iy) * step`, row-major in `iy`.
/// Anchoring on integer multiples of `step` keeps grid points bit-identical
/// to lattice vertex coordinates computed the same way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterGrid {
    pub i0: i64,
    pub j0: i64,
    pub step: f64,
    pub nx: usize,
    pub ny: usize,
}

impl RasterGrid {
    pub fn new(i0: i64, j0: i64, step: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) || nx == 0 || ny == 0 {
            return Err(Error::Validation(format!(
                "raster: need positive step and nonzero extent, got step={step}, {nx}x{ny}"
            )));
        }
        Ok(RasterGrid { i0, j0, step, nx, ny })
    }

    /// The smallest raster of pitch `step` containing all multiples of
    /// `step` inside the closed window.
    pub fn covering(window: &Box2, step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::Validation(format!("raster: step must be positive, got {step}")));
        }
        let slack = 1e-9;
        let lo = |c: f64| ((c - window.half_side) / step - slack).ceil() as i64;
        let hi = |c: f64| ((c + window.half_side) / step + slack).floor() as i64;
        let (i0, i1) = (lo(window.center[0]), hi(window.center[0]));
        let (j0, j1) = (lo(window.center[1]), hi(window.center[1]));
        if i1 < i0 || j1 < j0 {
            return Err(Error::Validation(
                "raster: window smaller than one step contains no grid point".into(),
            ));
        }
        RasterGrid::new(i0, j0, step, (i1 - i0 + 1) as usize, (j1 - j0 + 1) as usize)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn point(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            (self.i0 + ix as i64) as f64 * self.step,
            (self.j0 + iy as i64) as f64 * self.step,
        ]
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.len());
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                out.push(self.point(ix, iy));
            }
        }
        out
    }
}

/// Spectral diagnostics of a circulant embedding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingReport {
    pub padding: usize,
    pub torus: [usize; 2],
    pub min_eigenvalue: f64,
    /// Fraction of absolute spectral mass removed by clipping negative
    /// eigenvalues (beyond a 1e-8 relative tolerance).
    pub clipped_mass: f64,
}

/// Stationary-field sampler on a raster via circulant embedding.
///
/// The kernel is wrapped onto a torus at least `padding` times the window
/// (rounded up to a power of two) using the minimum-image distance, so every
/// in-window pair keeps its exact covariance as long as padding ≥ 2. The
/// wrapped kernel's DFT gives the eigenvalues; slightly negative ones are
/// clipped and the removed mass reported. One complex FFT yields two
/// independent real fields.
pub struct CirculantGrid {
    grid: RasterGrid,
    torus: [usize; 2],
    scaled_sqrt_eigs: Vec<f64>,
    report: EmbeddingReport,
    synth_row: Arc<dyn Fft<f64>>,
    synth_col: Arc<dyn Fft<f64>>,
}

fn fft2(buf: &mut [Complex<f64>], nx: usize, ny: usize, row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
    for r in buf.chunks_exact_mut(nx) {
        row.process(r);
    }
    let mut column = vec![Complex::new(0.0, 0.0); ny];
    for x in 0..nx {
        for y in 0..ny {
            column[y] = buf[y * nx + x];
        }
        col.process(&mut column);
        for y in 0..ny {
            buf[y * nx + x] = column[y];
        }
    }
}

impl CirculantGrid {
    pub fn new(kernel: &Kernel, grid: &RasterGrid, padding: usize) -> Result<Self> {
        if padding < 2 {
            return Err(Error::Validation(format!(
                "padding: factor must be at least 2 to keep in-window covariances exact, got {padding}"
            )));
        }
        let tx = (padding * grid.nx).next_power_of_two();
        let ty = (padding * grid.ny).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd_row = planner.plan_fft_forward(tx);
        let fwd_col = planner.plan_fft_forward(ty);

        let mut buf = vec![Complex::new(0.0, 0.0); tx * ty];
        for v in 0..ty {
            let dy = v.min(ty - v) as f64 * grid.step;
            for u in 0..tx {
                let dx = u.min(tx - u) as f64 * grid.step;
                buf[v * tx + u] = Complex::new(kernel.eval_offset([dx, dy]).value, 0.0);
            }
        }
        fft2(&mut buf, tx, ty, &fwd_row, &fwd_col);

        let mut min_eigenvalue = f64::INFINITY;
        let mut max_eigenvalue = f64::NEG_INFINITY;
        let mut total = 0.0;
        let mut clipped = 0.0;
        for z in &buf {
            let lam = z.re;
            min_eigenvalue = min_eigenvalue.min(lam);
            max_eigenvalue = max_eigenvalue.max(lam);
            total += lam.abs();
        }
        if !(max_eigenvalue > 0.0) {
            return Err(Error::Degenerate(
                "circulant spectrum has no positive eigenvalue".into(),
            ));
        }
        let tol = 1e-8 * max_eigenvalue;
        for z in &buf {
            if z.re < -tol {
                clipped -= z.re;
            }
        }
        let clipped_mass = clipped / total;
        let report = EmbeddingReport {
            padding,
            torus: [tx, ty],
            min_eigenvalue,
            clipped_mass,
        };
        if clipped_mass > 1e-3 {
            return Err(Error::Embedding { clipped_mass, padding });
        }

        let n = (tx * ty) as f64;
        let scaled_sqrt_eigs =
            buf.iter().map(|z| if z.re > 0.0 { (z.re / n).sqrt() } else { 0.0 }).collect();
        Ok(CirculantGrid {
            grid: *grid,
            torus: [tx, ty],
            scaled_sqrt_eigs,
            report,
            synth_row: planner.plan_fft_inverse(tx),
            synth_col: planner.plan_fft_inverse(ty),
        })
    }

    /// Build with padding 2, doubling up to 16 while the embedding fails.
    pub fn auto(kernel: &Kernel, grid: &RasterGrid) -> Result<Self> {
        let mut padding = 2;
        loop {
            match Self::new(kernel, grid, padding) {
                Ok(g) => return Ok(g),
                Err(Error::Embedding { .. }) if padding < 16 => padding *= 2,
                Err(e) => return Err(e),
            }
        }
    }

    pub fn grid(&self) -> &RasterGrid {
        &self.grid
    }

    pub fn report(&self) -> &EmbeddingReport {
        &self.report
    }

    /// Two independent fields from one FFT (real and imaginary parts).
    pub fn sample_pair(&self, seed: u64) -> (FieldSample, FieldSample) {
        let [tx, ty] = self.torus;
        let mut rng = rng_stream(seed, LANE_CIRCULANT, 0);
        let mut buf: Vec<Complex<f64>> = self
            .scaled_sqrt_eigs
            .iter()
            .map(|&s| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                // Unit-variance real and imaginary parts: after the unitary
                // synthesis both output parts carry the full covariance.
                Complex::new(a, b) * s
            })
            .collect();
        fft2(&mut buf, tx, ty, &self.synth_row, &self.synth_col);

        let points = self.grid.points();
        let mut re = Vec::with_capacity(points.len());
        let mut im = Vec::with_capacity(points.len());
        for iy in 0..self.grid.ny {
            for ix in 0..self.grid.nx {
                let z = buf[iy * tx + ix];
                re.push(z.re);
                im.push(z.im);
            }
        }
        let method = SampleMethod::Circulant {
            padding: self.report.padding,
            min_eigenvalue: self.report.min_eigenvalue,
            clipped_mass: self.report.clipped_mass,
        };
        (
            FieldSample { points: points.clone(), values: re, seed, method },
            FieldSample { points, values: im, seed, method },
        )
    }

    pub fn sample(&self, seed: u64) -> FieldSample {
        self.sample_pair(seed).0
    }
}

pub fn sample_circulant(
    kernel: &Kernel,
    grid: &RasterGrid,
    padding: usize,
    seed: u64,
) -> Result<FieldSample> {
    Ok(CirculantGrid::new(kernel, grid, padding)?.sample(seed))
}

/// Truncation budget for the entire-series sampler: the degree `N` controls
/// the sup-norm tail on the disc of radius `R` through
/// `P[tail > eps] <= e^(16 R^2) / (eps^2 4^N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationBudget {
    pub radius: f64,
    pub eps: f64,
    pub delta: f64,
    pub degree: u32,
}

impl TruncationBudget {
    /// The tail bound the budget promises, in log form.
    pub fn log_tail_bound(&self) -> f64 {
        16.0 * self.radius * self.radius
            - 2.0 * self.eps.ln()
            - f64::from(self.degree) * (2.0 * std::f64::consts::LN_2)
    }

    pub fn satisfied(&self) -> bool {
        self.log_tail_bound() <= self.delta.ln()
    }
}

/// Minimal degree `N` meeting the tail bound for (R, eps, delta).
pub fn choose_truncation(radius: f64, eps: f64, delta: f64) -> Result<TruncationBudget> {
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::Validation(format!("radius: must be finite and >= 0, got {radius}")));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Validation(format!("eps: must be positive, got {eps}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Validation(format!("delta: must be in (0, 1], got {delta}")));
    }
    let ln4 = 2.0 * std::f64::consts::LN_2;
    let need = 16.0 * radius * radius - 2.0 * eps.ln() - delta.ln();
    let mut n = (need / ln4).ceil().max(0.0) as u32;
    let ok = |n: u32| TruncationBudget { radius, eps, delta, degree: n }.satisfied();
    while !ok(n) {
        n += 1;
    }
    while n > 0 && ok(n - 1) {
        n -= 1;
    }
    Ok(TruncationBudget { radius, eps, delta, degree: n })
}

// Sign and log-magnitude of x^k, with the x = 0 cases made explicit so no
// 0 * ln(0) NaN can arise.
fn pow_log(x: f64, k: u32) -> Option<(f64, f64)> {
    if k == 0 {
        return Some((1.0, 0.0));
    }
    if x == 0.0 {
        return None;
    }
    let sign = if x < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
    Some((sign, f64::from(k) * x.abs().ln()))
}

fn ln_factorial(k: u32) -> f64 {
    if k <= 1 {
        return 0.0;
    }
    ln_gamma(f64::from(k) + 1.0)
}

/// Truncated entire-series sampler:
/// `exp(-|x|^2/2) * sum_{i+j<=N} a_ij x1^i x2^j / sqrt(i! j!)`
/// with i.i.d. standard normal coefficients. All monomial/factorial
/// arithmetic happens in log space; the deterministic per-point term table
/// is precomputed so each sample is a dot product with fresh normals.
pub struct BfSeriesSampler {
    points: Vec<[f64; 2]>,
    budget: TruncationBudget,
    terms: Vec<f64>,
    n_coeffs: usize,
}

impl BfSeriesSampler {
    pub fn new(budget: &TruncationBudget, points: &[[f64; 2]]) -> Result<Self> {
        for &p in points {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            if r > budget.radius * (1.0 + 1e-12) {
                return Err(Error::Domain(format!(
                    "point ({}, {}) lies outside the truncation disc of radius {}",
                    p[0], p[1], budget.radius
                )));
            }
        }
        let n = budget.degree;
        let n_coeffs = ((n as usize + 1) * (n as usize + 2)) / 2;
        let mut terms = Vec::with_capacity(points.len() * n_coeffs);
        for &p in points {
            let ln_pref = -0.5 * (p[0] * p[0] + p[1] * p[1]);
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let t = match (pow_log(p[0], i), pow_log(p[1], j)) {
                        (Some((s1, l1)), Some((s2, l2))) => {
                            s1 * s2
                                * (ln_pref + l1 + l2
                                    - 0.5 * (ln_factorial(i) + ln_factorial(j)))
                                .exp()
                        }
                        _ => 0.0,
                    };
                    terms.push(t);
                }
            }
        }
        Ok(BfSeriesSampler { points: points.to_vec(), budget: *budget, terms, n_coeffs })
    }

    pub fn budget(&self) -> &TruncationBudget {
        &self.budget
    }

    pub fn coefficient_count(&self) -> usize {
        self.n_coeffs
    }

    /// Coefficients are consumed in (i, j) lexicographic order:
    /// `(0,0), (0,1), ..., (0,N), (1,0), ...`.
    pub fn sample_from_normals(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.n_coeffs);
        self.terms
            .chunks_exact(self.n_coeffs)
            .map(|row| row.iter().zip(z).map(|(t, a)| t * a).sum())
            .collect()
    }

    pub fn sample(&self, seed: u64) -> FieldSample {
        let mut rng = rng_stream(seed, LANE_SERIES, 0);
        let z = standard_normals(&mut rng, self.n_coeffs);
        FieldSample {
            points: self.points.clone(),
            values: self.sample_from_normals(&z),
            seed,
            method: SampleMethod::Series { degree: self.budget.degree },
        }
    }
}

pub fn sample_bf_series(
    budget: &TruncationBudget,
    points: &[[f64; 2]],
    seed: u64,
) -> Result<FieldSample> {
    Ok(BfSeriesSampler::new(budget, points)?.sample(seed))
}

/// Degree-`d` projective polynomial ensemble, rescaled and normalized to
/// unit pointwise variance:
/// `(1 + |x|^2/d)^(-d/2) * sqrt(d!) * p(x / sqrt(d))` where
/// `p(y) = sum_{i+j<=d} a_ij y1^i y2^j / sqrt((d-i-j)! i! j!)`.
/// The raw polynomial has `Var p(y) = (1 + |y|^2)^d / d!`, so the prefactor
/// is exactly the pointwise standard deviation: the normalization is a
/// positive factor and leaves signs unchanged.
pub struct KostlanSampler {
    points: Vec<[f64; 2]>,
    degree: u32,
    terms: Vec<f64>,
    n_coeffs: usize,
}

impl KostlanSampler {
    pub fn new(degree: u32, points: &[[f64; 2]]) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Validation("degree: must be at least 1".into()));
        }
        for &p in points {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::Validation(format!("points: non-finite point {p:?}")));
            }
        }
        let d = degree;
        let sqrt_d = f64::from(d).sqrt();
        let ln_d_fact = ln_factorial(d);
        let n_coeffs = ((d as usize + 1) * (d as usize + 2)) / 2;
        let mut terms = Vec::with_capacity(points.len() * n_coeffs);
        for &p in points {
            let u = [p[0] / sqrt_d, p[1] / sqrt_d];
            let norm2 = p[0] * p[0] + p[1] * p[1];
            let ln_var_scale = -0.5 * f64::from(d) * (norm2 / f64::from(d)).ln_1p();
            for i in 0..=d {
                for j in 0..=(d - i) {
                    let t = match (pow_log(u[0], i), pow_log(u[1], j)) {
                        (Some((s1, l1)), Some((s2, l2))) => {
                            s1 * s2
                                * (ln_var_scale + 0.5 * ln_d_fact + l1 + l2
                                    - 0.5
                                        * (ln_factorial(d - i - j)
                                            + ln_factorial(i)
                                            + ln_factorial(j)))
                                .exp()
                        }
                        _ => 0.0,
                    };
                    terms.push(t);
                }
            }
        }
        Ok(KostlanSampler { points: points.to_vec(), degree, terms, n_coeffs })
    }

    pub fn coefficient_count(&self) -> usize {
        self.n_coeffs
    }

    pub fn sample_from_normals(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.n_coeffs);
        self.terms
            .chunks_exact(self.n_coeffs)
            .map(|row| row.iter().zip(z).map(|(t, a)| t * a).sum())
            .collect()
    }

    pub fn sample(&self, seed: u64) -> FieldSample {
        let mut rng = rng_stream(seed, LANE_KOSTLAN, 0);
        let z = standard_normals(&mut rng, self.n_coeffs);
        FieldSample {
            points: self.points.clone(),
            values: self.sample_from_normals(&z),
            seed,
            method: SampleMethod::Kostlan { degree: self.degree },
        }
    }
}

pub fn sample_kostlan(degree: u32, points: &[[f64; 2]], seed: u64) -> Result<FieldSample> {
    Ok(KostlanSampler::new(degree, points)?.sample(seed))
}

/// Monochromatic plane-wave superposition
/// `sqrt(2/M) * sum_k cos(<x, u_k> + phi_k)` with `u_k` uniform on the unit
/// circle and `phi_k` uniform phases. Each summand already has covariance
/// `E[2 cos(<x,u>+phi) cos(<y,u>+phi)] = E[cos(<x-y,u>)] = J0(|x-y|)`, so the
/// covariance is exactly the Bessel kernel for every `M`; `M` only controls
/// how Gaussian the marginals are.
pub fn sample_wave(count: u32, points: &[[f64; 2]], seed: u64) -> Result<FieldSample> {
    if count == 0 {
        return Err(Error::Validation("count: need at least one wave".into()));
    }
    let mut rng = rng_stream(seed, LANE_WAVE, 0);
    let mut values = vec![0.0f64; points.len()];
    for _ in 0..count {
        let theta = rng.gen::<f64>() * std::f64::consts::TAU;
        let phi = rng.gen::<f64>() * std::f64::consts::TAU;
        let (uy, ux) = theta.sin_cos();
        for (v, p) in values.iter_mut().zip(points) {
            *v += (p[0] * ux + p[1] * uy + phi).cos();
        }
    }
    let scale = (2.0 / f64::from(count)).sqrt();
    for v in &mut values {
        *v *= scale;
    }
    Ok(FieldSample {
        points: points.to_vec(),
        values,
        seed,
        method: SampleMethod::Wave { count },
    })
}
