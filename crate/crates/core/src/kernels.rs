//! Stationary covariance kernels on the plane.
//!
//! Every kernel here is normalized to unit variance, `K(0) = 1`, and is a
//! function of the offset `x - y` alone (the Kostlan family is the one
//! deliberate exception: it is a variance-normalized projective model whose
//! covariance converges to the Gaussian-analytic limit as the degree grows,
//! and evaluation reports that it is an approximation).

use crate::{Error, Result};

/// Bessel function of the first kind, order zero.
///
/// Backed by the fdlibm port in `libm`, which keeps the absolute error a
/// few ulp across the whole line — comfortably below the 1e-12 the crate
/// promises for kernel evaluation.
pub fn bessel_j0(r: f64) -> f64 {
    libm::j0(r)
}

/// Polynomial decay certificate: `|K(x)| <= beta * |x|^(-alpha)` for
/// `|x| >= 1`, with `beta` carried as `ln beta` because useful certificates
/// for rapidly decaying kernels need `beta` far beyond `f64::MAX`
/// (the squared-exponential kernel with `alpha = 325` needs
/// `ln beta >= 777.372`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayMeta {
    pub alpha: f64,
    pub ln_beta: f64,
}

/// Radially tabulated kernel: strictly increasing radii starting at 0,
/// values in `[-1, 1]` with `values[0] = 1`, linear interpolation between
/// knots, identically zero beyond the last radius.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialTable {
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl RadialTable {
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::Validation("radii: table must be non-empty".into()));
        }
        if radii.len() != values.len() {
            return Err(Error::Validation(format!(
                "values: length {} does not match radii length {}",
                values.len(),
                radii.len()
            )));
        }
        if radii[0] != 0.0 {
            return Err(Error::Validation(format!(
                "radii: first radius must be 0, got {}",
                radii[0]
            )));
        }
        for w in radii.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Validation(format!(
                    "radii: not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        if values[0] != 1.0 {
            return Err(Error::Validation(format!(
                "values: value at radius 0 must be 1, got {}",
                values[0]
            )));
        }
        for (&r, &v) in radii.iter().zip(values.iter()) {
            if !v.is_finite() || v.abs() > 1.0 {
                return Err(Error::Validation(format!(
                    "values: entry {v} at radius {r} outside [-1, 1]"
                )));
            }
        }
        Ok(Self { radii, values })
    }

    pub fn eval(&self, r: f64) -> f64 {
        let last = *self.radii.last().unwrap();
        if r >= last {
            // Beyond the table the kernel is taken to vanish; the last knot
            // itself is still interpolated exactly.
            return if r == last { *self.values.last().unwrap() } else { 0.0 };
        }
        match self.radii.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
            Ok(i) => self.values[i],
            Err(i) => {
                let (r0, r1) = (self.radii[i - 1], self.radii[i]);
                let (v0, v1) = (self.values[i - 1], self.values[i]);
                v0 + (v1 - v0) * (r - r0) / (r1 - r0)
            }
        }
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }
}

/// The covariance families the laboratory works with.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    /// Squared-exponential `exp(-|x|^2 / 2)`: covariance of the planar
    /// Gaussian entire series with monomial weights `1/sqrt(i! j!)`.
    BargmannFock,
    /// `J_0(|x|)`: covariance of the monochromatic random wave.
    BesselWave,
    /// Degree-`d` homogeneous polynomial ensemble rescaled to unit variance;
    /// its normalized covariance at fixed offsets tends to the
    /// squared-exponential kernel as `d` grows.
    KostlanRescaled(u32),
    /// Interpolated radial table.
    Tabulated(RadialTable),
}

/// A kernel together with optional decay metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub family: KernelFamily,
    pub decay: Option<DecayMeta>,
}

/// Result of a kernel evaluation: the value, and whether it is exact for
/// the family (the Kostlan family only evaluates its large-degree limit).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub exact: bool,
}

/// One row of a decay audit: the sampled radius and the ratio
/// `|K(r)| / (beta r^(-alpha))`, computed in log space so that enormous
/// `beta` never overflows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRatio {
    pub radius: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub max_ratio: f64,
    pub ratios: Vec<DecayRatio>,
}

impl DecayReport {
    pub fn holds(&self) -> bool {
        self.max_ratio <= 1.0
    }
}

impl Kernel {
    /// Squared-exponential kernel with its sharp polynomial-decay
    /// certificate: `sup_r exp(-r^2/2) r^325 = exp(777.3716...)` (attained
    /// at `r = sqrt(325)`), so `alpha = 325`, `ln beta = 778` is valid with
    /// a little slack.
    pub fn bargmann_fock() -> Self {
        Kernel {
            family: KernelFamily::BargmannFock,
            decay: Some(DecayMeta { alpha: 325.0, ln_beta: 778.0 }),
        }
    }

    /// Monochromatic wave kernel; `|J_0(r)| <= r^(-1/2)` for `r >= 1`
    /// (the envelope is `sqrt(2/(pi r))` asymptotically, below `r^(-1/2)`).
    pub fn bessel_wave() -> Self {
        Kernel {
            family: KernelFamily::BesselWave,
            decay: Some(DecayMeta { alpha: 0.5, ln_beta: 0.0 }),
        }
    }

    /// Degree-`d` projective ensemble, unit-variance normalization.
    /// Carries no decay certificate of its own: the finite-degree model is
    /// not stationary, only its limit is.
    pub fn kostlan(degree: u32) -> Self {
        Kernel { family: KernelFamily::KostlanRescaled(degree), decay: None }
    }

    pub fn tabulated(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Ok(Kernel { family: KernelFamily::Tabulated(RadialTable::new(radii, values)?), decay: None })
    }

    pub fn with_decay(mut self, alpha: f64, ln_beta: f64) -> Self {
        self.decay = Some(DecayMeta { alpha, ln_beta });
        self
    }

    /// Covariance of the field between two points at offset `dx`.
    pub fn eval_offset(&self, dx: [f64; 2]) -> KernelValue {
        let r = (dx[0] * dx[0] + dx[1] * dx[1]).sqrt();
        self.eval_radial(r)
    }

    /// Covariance at radial separation `r >= 0`.
    pub fn eval_radial(&self, r: f64) -> KernelValue {
        match &self.family {
            KernelFamily::BargmannFock => KernelValue { value: (-0.5 * r * r).exp(), exact: true },
            KernelFamily::BesselWave => KernelValue { value: bessel_j0(r), exact: true },
            // Evaluates the large-degree limit; the exactness flag records
            // that the finite-degree covariance differs by O(1/d).
            KernelFamily::KostlanRescaled(_) => {
                KernelValue { value: (-0.5 * r * r).exp(), exact: false }
            }
            KernelFamily::Tabulated(t) => KernelValue { value: t.eval(r), exact: true },
        }
    }

    /// Audit the polynomial-decay certificate on the given radii
    /// (each must be `>= 1`). Ratios are formed as
    /// `exp(ln|K(r)| + alpha ln r - ln beta)`; a zero kernel value gives
    /// ratio 0. The certificate holds on the sample iff `max_ratio <= 1`.
    pub fn decay_check(&self, radii: &[f64]) -> Result<DecayReport> {
        let meta = self.decay.ok_or_else(|| {
            Error::Unsupported("decay_check: kernel carries no decay metadata".into())
        })?;
        let mut ratios = Vec::with_capacity(radii.len());
        let mut max_ratio = 0.0f64;
        for &r in radii {
            if !(r >= 1.0) {
                return Err(Error::Domain(format!(
                    "decay_check: radius {r} below 1, certificate applies to |x| >= 1"
                )));
            }
            let k = self.eval_radial(r).value.abs();
            let ratio = if k == 0.0 {
                0.0
            } else {
                (k.ln() + meta.alpha * r.ln() - meta.ln_beta).exp()
            };
            max_ratio = max_ratio.max(ratio);
            ratios.push(DecayRatio { radius: r, ratio });
        }
        Ok(DecayReport { max_ratio, ratios })
    }
}
