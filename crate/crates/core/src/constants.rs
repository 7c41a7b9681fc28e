//! Deterministic evaluation of the quantitative crossing-probability
//! constant pipeline and the decorrelation/mesh budgets, entirely in
//! log-space arithmetic: the constants involved are astronomically large or
//! small (tau1 alone exceeds e^2000), so only their logarithms are
//! representable.

use crate::kernels::Kernel;
use crate::{Error, Result};

/// ln of the universal coupling constant C = 2^{14/5}.
pub const LOG_COUPLING_C: f64 = 2.8 * std::f64::consts::LN_2;

/// Output of the constant pipeline for a given crossing floor `c0` and
/// aspect modulus `nu`. All `log_*` fields are natural logarithms of the
/// corresponding (unrepresentably large or small) positive quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RswConstants {
    pub c0: f64,
    pub nu: f64,
    pub log_q1: f64,
    pub log_q2: f64,
    pub log_q3: f64,
    pub log_tau1: f64,
    pub gamma_nu: f64,
    pub log_s_omega: f64,
    pub log_s_nu: f64,
    pub log_t_nu: f64,
    pub alpha_lower: f64,
}

/// Decay/coupling budget of a kernel: vertex density `a_t` and the
/// polynomial decay certificate `|K(x)| <= beta |x|^{-alpha}` (beta stored
/// as a logarithm). The coupling constant is fixed at 2^{14/5}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecorrBudget {
    pub a_t: f64,
    pub log_c: f64,
    pub alpha: f64,
    pub ln_beta: f64,
}

impl DecorrBudget {
    pub fn new(a_t: f64, alpha: f64, ln_beta: f64) -> Result<Self> {
        if !(a_t > 0.0 && a_t.is_finite()) {
            return Err(Error::Validation(format!("a_t: must be positive, got {a_t}")));
        }
        if !(alpha > 0.0 && alpha.is_finite() && ln_beta.is_finite()) {
            return Err(Error::Validation(format!(
                "decay certificate: need finite alpha > 0 and ln_beta, got alpha={alpha}, ln_beta={ln_beta}"
            )));
        }
        Ok(DecorrBudget { a_t, log_c: LOG_COUPLING_C, alpha, ln_beta })
    }

    /// Budget taken from a kernel's decay certificate.
    pub fn from_kernel(kernel: &Kernel, a_t: f64) -> Result<Self> {
        let meta = kernel.decay.ok_or_else(|| {
            Error::Unsupported("kernel carries no polynomial decay certificate".into())
        })?;
        Self::new(a_t, meta.alpha, meta.ln_beta)
    }

    /// Default budget: the Gaussian-analytic kernel certificate
    /// (alpha = 325, ln beta = 778) at unit-mesh vertex density 2.
    pub fn default_gaussian() -> Self {
        DecorrBudget { a_t: 2.0, log_c: LOG_COUPLING_C, alpha: 325.0, ln_beta: 778.0 }
    }

    /// ln C' of the assembled decorrelation envelope. The proof chain only
    /// asserts "there exists a constant"; the assembly used here is
    /// C' = 2^{14/5} * 56^{8/5} * beta^{1/5}, from a processed-area budget
    /// of 56 s^2 ln^2 s at pairwise separation s:
    /// C * (56 s^2 ln^2 s)^{8/5} * (beta s^{-alpha})^{1/5}
    ///   = C' * s^{(16-alpha)/5} * ln^{16/5} s   (a_t factor kept separate).
    pub fn log_c_prime(&self) -> f64 {
        self.log_c + 1.6 * 56f64.ln() + self.ln_beta / 5.0
    }
}

/// Log of the decorrelation envelope at scale `s` (> 1):
/// ln C' + (8/5) ln a_t + ((16 - alpha)/5) ln s + (16/5) ln ln s.
pub fn phi_envelope_log(budget: &DecorrBudget, s: f64) -> Result<f64> {
    if !(s > 1.0) {
        return Err(Error::Domain(format!("envelope scale: need s > 1, got {s}")));
    }
    let x = s.ln();
    Ok(budget.log_c_prime() + 1.6 * budget.a_t.ln() + (16.0 - budget.alpha) / 5.0 * x
        + 3.2 * x.ln())
}

/// Unclamped log of the pairwise decorrelation bound
/// C * a_t^{8/5} * area^{8/5} * sup|K|^{1/5}.
/// Returns negative infinity when the kernel bound is zero.
pub fn phi_bound_log(budget: &DecorrBudget, area: f64, sup_abs_k: f64) -> Result<f64> {
    if !(area > 0.0 && area.is_finite()) {
        return Err(Error::Validation(format!("area: must be positive, got {area}")));
    }
    if !(0.0..=1.0).contains(&sup_abs_k) {
        return Err(Error::Validation(format!(
            "sup_abs_k: must lie in [0, 1], got {sup_abs_k}"
        )));
    }
    if sup_abs_k == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(budget.log_c + 1.6 * (budget.a_t.ln() + area.ln()) + 0.2 * sup_abs_k.ln())
}

/// The decorrelation bound as a probability: exp of [`phi_bound_log`],
/// clamped to 1 (a probability bound above 1 is vacuous).
pub fn phi_bound(budget: &DecorrBudget, area: f64, sup_abs_k: f64) -> Result<f64> {
    Ok(phi_bound_log(budget, area, sup_abs_k)?.exp().min(1.0))
}

fn check_c0_nu(c0: f64, nu: f64) -> Result<()> {
    if !(c0 > 0.0 && c0 < 1.0) {
        return Err(Error::Validation(format!("c0: must lie in (0, 1), got {c0}")));
    }
    if !(nu > 0.0 && nu < 0.5) {
        return Err(Error::Validation(format!("nu: must lie in (0, 1/2), got {nu}")));
    }
    Ok(())
}

/// gamma(nu) = 1 + log_{4/(3+2 nu)}(3/2 + nu).
pub fn gamma_nu(nu: f64) -> Result<f64> {
    if !(nu > 0.0 && nu < 0.5) {
        return Err(Error::Validation(format!("nu: must lie in (0, 1/2), got {nu}")));
    }
    Ok(1.0 + (1.5 + nu).ln() / (4.0 / (3.0 + 2.0 * nu)).ln())
}

/// Solve the envelope equation
///   phi_envelope_log(s) = ln(c0/16) + log_q3
/// for x = ln s, on the decreasing branch right of the envelope's peak.
fn solve_log_s_omega(budget: &DecorrBudget, c0: f64, log_q3: f64) -> Result<f64> {
    if budget.alpha <= 16.0 {
        return Err(Error::Domain(format!(
            "decay exponent alpha = {} must exceed 16 for the envelope to decay",
            budget.alpha
        )));
    }
    let target = (c0 / 16.0).ln() + log_q3;
    let f = |x: f64| {
        budget.log_c_prime() + 1.6 * budget.a_t.ln() + (16.0 - budget.alpha) / 5.0 * x
            + 3.2 * x.ln()
            - target
    };
    // The envelope (as a function of x = ln s) peaks at x = 16/(alpha-16).
    let peak = 16.0 / (budget.alpha - 16.0);
    if f(peak) <= 0.0 {
        // Envelope below target everywhere: scale 1 already suffices.
        return Ok(0.0);
    }
    let mut lo = peak;
    let mut hi = 2.0 * peak + 1.0;
    while f(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Domain(
                "envelope never drops to the requested decorrelation target".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.abs() {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Run the whole constant pipeline with explicit decay budget and lower
/// crossing-angle calibration `alpha_lower`.
pub fn pipeline_with(
    c0: f64,
    nu: f64,
    budget: &DecorrBudget,
    alpha_lower: f64,
) -> Result<RswConstants> {
    check_c0_nu(c0, nu)?;
    if !(alpha_lower > 0.0 && alpha_lower.is_finite()) {
        return Err(Error::Validation(format!(
            "alpha_lower: must be positive, got {alpha_lower}"
        )));
    }
    // Q1 = c0 (c0/8)^4; the 8^4 is expanded to 12 ln 2 so the c0 = 1/2 case
    // collapses to -17 ln 2 at full precision.
    let log_q1 = 5.0 * c0.ln() - 12.0 * std::f64::consts::LN_2;
    // Q2 = min(q2, q2~) with q2 = (Q1^15 c0^2)^4 and q2~ = ((Q1 (c0/4)^2)^9 c0^8)^4.
    let log_q2_a = 60.0 * log_q1 + 8.0 * c0.ln();
    let log_q2_b = 36.0 * log_q1 + 72.0 * (c0 / 4.0).ln() + 32.0 * c0.ln();
    let log_q2 = log_q2_a.min(log_q2_b);
    // Q3 = (Q2 (c0/4)^2)^3 c0^2.
    let log_q3 = 3.0 * (log_q2 + 2.0 * (c0 / 4.0).ln()) + 2.0 * c0.ln();

    // tau1 = ln5 * ln(c0/8) / ln(1 - Q3/2) + ln5. Q3 underflows f64 by
    // thousands of orders, so |ln(1 - Q3/2)| is expanded as
    // (Q3/2)(1 + Q3/4 + ...) and the whole quantity stays in log space.
    let ln5 = 5f64.ln();
    let a = ln5 * (8.0 / c0).ln();
    let q3 = log_q3.exp();
    let log_tau1 = if q3 < 1e-8 {
        let log_abs_denom = log_q3 - std::f64::consts::LN_2 + q3 / 4.0;
        let lt = a.ln() - log_abs_denom;
        if lt < 700.0 {
            (lt.exp() + ln5).ln()
        } else {
            lt
        }
    } else {
        (a / (-(-q3 / 2.0).ln_1p()) + ln5).ln()
    };

    let gamma = gamma_nu(nu)?;
    let log_s_omega = solve_log_s_omega(budget, c0, log_q3)?;
    // s_nu also has to exceed 6/nu; the integer ceiling keeps the mesh
    // admissible for the aspect modulus.
    let log_s_nu = log_s_omega.max(((6.0 / nu).floor() + 1.0).ln());
    let log_t_nu = (1.5 + nu).ln() + gamma * log_s_nu + (1.0 - gamma) * alpha_lower.ln();

    Ok(RswConstants {
        c0,
        nu,
        log_q1,
        log_q2,
        log_q3,
        log_tau1,
        gamma_nu: gamma,
        log_s_omega,
        log_s_nu,
        log_t_nu,
        alpha_lower,
    })
}

/// Constant pipeline with the default Gaussian-analytic decay budget and
/// the default calibration alpha_lower = 1/16.
pub fn pipeline(c0: f64, nu: f64) -> Result<RswConstants> {
    pipeline_with(c0, nu, &DecorrBudget::default_gaussian(), 1.0 / 16.0)
}

/// Smallest k >= 0 with s + k divisible by 6.
pub fn mod6_shift(s: u64) -> Result<u64> {
    if s == 0 {
        return Err(Error::Validation("s: must be at least 1".into()));
    }
    Ok((6 - s % 6) % 6)
}

/// Closed-form scale bound t_nu <= C_{theta,nu} a_t^{8 gamma/(alpha-16-theta)}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TnuBound {
    pub exponent: f64,
    pub log_coefficient: f64,
    pub log_value: f64,
}

/// Assemble the closed-form bound from the pipeline constants. Using
/// ln^{16/5} s <= C_theta s^{theta/5} with C_theta = (16/(theta e))^{16/5},
/// the envelope solution obeys
///   s_omega <= (16 C' C_theta a_t^{8/5} / (c0 Q3))^{5/(alpha-16-theta)},
/// hence, with t_nu = (3/2+nu) s_nu^gamma alpha_lower^{1-gamma},
///   C_{theta,nu} = (3/2+nu) alpha_lower^{1-gamma}
///                  (16 C' C_theta / (c0 Q3))^{5 gamma/(alpha-16-theta)}
/// and the density enters as a_t^{8 gamma/(alpha-16-theta)}.
pub fn t_nu_bound(consts: &RswConstants, budget: &DecorrBudget, theta: f64) -> Result<TnuBound> {
    if !(theta > 0.0 && theta < budget.alpha - 16.0) {
        return Err(Error::Domain(format!(
            "theta: must lie in (0, alpha - 16) = (0, {}), got {theta}",
            budget.alpha - 16.0
        )));
    }
    let gamma = consts.gamma_nu;
    let exponent = 8.0 * gamma / (budget.alpha - 16.0 - theta);
    let log_c_theta = 3.2 * ((16.0 / theta).ln() - 1.0);
    let log_coefficient = (1.5 + consts.nu).ln()
        + (1.0 - gamma) * consts.alpha_lower.ln()
        + (5.0 * gamma / (budget.alpha - 16.0 - theta))
            * (16f64.ln() + budget.log_c_prime() + log_c_theta - consts.c0.ln() - consts.log_q3);
    let log_value = log_coefficient + exponent * budget.a_t.ln();
    Ok(TnuBound { exponent, log_coefficient, log_value })
}

/// One grid point of the Monte Carlo curves feeding [`estimate_alpha_s`]:
/// the four-strip link probability and the windowed-crossing gap
/// P[low-window crossing] - P[high-window crossing], with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaCurvePoint {
    pub alpha: f64,
    pub p_x: f64,
    pub se_x: f64,
    pub h_gap: f64,
    pub se_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaEstimate {
    pub alpha_hat: f64,
    /// Whether any grid point met the four-strip probability floor; when
    /// false, alpha_hat falls back to s/4.
    pub p1_met: bool,
    /// Whether the windowed-crossing gap also clears c0/4 at alpha_hat.
    pub p2_holds: bool,
}

/// Scan the alpha grid (ascending) for the smallest alpha whose estimated
/// four-strip probability reaches the plug-in floor Q1(c0_hat); report
/// whether the crossing-gap condition also holds there.
pub fn estimate_alpha_s(s: f64, curve: &[AlphaCurvePoint], c0_hat: f64) -> Result<AlphaEstimate> {
    if !(s > 0.0) {
        return Err(Error::Validation(format!("s: must be positive, got {s}")));
    }
    if !(c0_hat > 0.0 && c0_hat < 1.0) {
        return Err(Error::Validation(format!("c0_hat: must lie in (0, 1), got {c0_hat}")));
    }
    if curve.is_empty() {
        return Err(Error::Validation("curve: empty grid".into()));
    }
    let tol = s * 1e-9;
    if !curve.windows(2).all(|w| w[0].alpha < w[1].alpha) {
        return Err(Error::Validation("curve: alpha grid must be strictly ascending".into()));
    }
    if curve[0].alpha > tol || curve[curve.len() - 1].alpha < s / 4.0 - tol {
        return Err(Error::Validation(format!(
            "curve: grid [{}, {}] must cover [0, s/4] = [0, {}]",
            curve[0].alpha,
            curve[curve.len() - 1].alpha,
            s / 4.0
        )));
    }
    let q1_hat = (5.0 * c0_hat.ln() - 12.0 * std::f64::consts::LN_2).exp();
    for point in curve {
        if point.p_x >= q1_hat {
            return Ok(AlphaEstimate {
                alpha_hat: point.alpha,
                p1_met: true,
                p2_holds: point.h_gap >= c0_hat / 4.0,
            });
        }
    }
    Ok(AlphaEstimate { alpha_hat: s / 4.0, p1_met: false, p2_holds: false })
}
