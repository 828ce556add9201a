//! Worst-case risk of a linear portfolio loss `−wᵀξ` over a Gelbrich ball, for positive
//! homogeneous risk measures (via the standard risk coefficient) and for mean-variance.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, SymMatrix};
use crate::metric::{GelbrichBall, MomentPair};

/// Robust risk split into its nominal, deviation and robustness contributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRiskReport {
    pub value: f64,
    /// `−μ̂ᵀw`
    pub nominal: f64,
    /// `α √(wᵀΣ̂w)`
    pub deviation: f64,
    /// `ρ √(1+α²) ‖w‖`, with `‖w‖_{H⁻¹}` under a Mahalanobis weight.
    pub robustness: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_case: Option<MomentPair>,
}

fn check_w(ball: &GelbrichBall, w: &DVector<f64>) -> Result<()> {
    if w.len() != ball.dim() {
        return Err(Error::DimMismatch { expected: ball.dim(), found: w.len() });
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

fn is_zero(w: &DVector<f64>) -> bool {
    w.iter().all(|&x| x == 0.0)
}

/// `‖w‖` or `‖w‖_{H⁻¹} = √(wᵀH⁻¹w)`.
fn dual_norm(ball: &GelbrichBall, w: &DVector<f64>) -> Result<f64> {
    match &ball.weight {
        None => Ok(w.norm()),
        Some(h) => {
            let ch = h.as_matrix().clone().cholesky().ok_or(Error::NotPd { min_eig: sym_eig(h)?.min() })?;
            Ok(w.dot(&ch.solve(w)).max(0.0).sqrt())
        }
    }
}

/// `−μ̂ᵀw + α√(wᵀΣ̂w) + ρ√(1+α²)‖w‖`.
pub fn gelbrich_risk_linear(ball: &GelbrichBall, w: &DVector<f64>, alpha: f64) -> Result<LinearRiskReport> {
    check_w(ball, w)?;
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::NegativeAlpha(alpha));
    }
    if is_zero(w) {
        return Ok(LinearRiskReport { value: 0.0, nominal: 0.0, deviation: 0.0, robustness: 0.0, worst_case: None });
    }
    let nominal = -ball.mean().dot(w);
    let deviation = alpha * ball.cov().quad_form(w).max(0.0).sqrt();
    let robustness = ball.radius * (1.0 + alpha * alpha).sqrt() * dual_norm(ball, w)?;
    Ok(LinearRiskReport { value: nominal + deviation + robustness, nominal, deviation, robustness, worst_case: None })
}

fn require_pd(cov: &SymMatrix) -> Result<()> {
    let lmin = sym_eig(cov)?.min();
    if lmin <= 1e-12 * cov.max_abs() {
        return Err(Error::SingularCov { min_eig: lmin });
    }
    Ok(())
}

/// Mean and covariance of the distributions attaining [`gelbrich_risk_linear`].
pub fn worst_case_moments_linear(ball: &GelbrichBall, w: &DVector<f64>, alpha: f64) -> Result<MomentPair> {
    check_w(ball, w)?;
    if ball.weight.is_some() {
        return Err(Error::MahalanobisUnsupported);
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::AlphaNotPositive(alpha));
    }
    if is_zero(w) {
        return Err(Error::ZeroPortfolio);
    }
    require_pd(ball.cov())?;
    if ball.radius == 0.0 {
        return Ok(ball.center.clone());
    }
    let wn = w.norm();
    let sd = ball.cov().quad_form(w).max(0.0).sqrt();
    if sd == 0.0 {
        return Err(Error::DegenerateDeviation);
    }
    let root = (1.0 + alpha * alpha).sqrt();
    let mean = ball.mean() - w * (ball.radius / (root * wn));
    let k = ball.radius * alpha / (root * wn * sd);
    let n = w.len();
    let stretch = nalgebra::DMatrix::identity(n, n) + (w * w.transpose()) * k;
    MomentPair::new(mean, ball.cov().congruence(&stretch))
}

/// Mean-variance risk `−μᵀw + β wᵀΣw` of fixed moments.
pub fn mean_variance(p: &MomentPair, w: &DVector<f64>, beta: f64) -> f64 {
    -p.mean.dot(w) + beta * p.cov.quad_form(w)
}

/// Univariate dual of the worst-case mean-variance risk, `γ ↦ f(γ)` on `γ > β‖w‖²`,
/// together with its first two derivatives.
struct MeanVarianceDual {
    rho_sq: f64,
    nominal: f64,
    w_sq: f64,
    beta: f64,
    var: f64,
}

impl MeanVarianceDual {
    fn pole(&self) -> f64 {
        self.beta * self.w_sq
    }

    fn value(&self, g: f64) -> f64 {
        g * self.rho_sq + self.nominal + self.w_sq / (4.0 * g) + self.beta * self.var * g / (g - self.pole())
    }

    /// `ρ² − [‖w‖²/(4γ²) + Tr Σ̂(I − γ(γI − βwwᵀ)⁻¹)²]`; increasing in `γ`.
    fn derivative(&self, g: f64) -> f64 {
        self.rho_sq - self.foc_lhs(g)
    }

    fn foc_lhs(&self, g: f64) -> f64 {
        let d = g - self.pole();
        self.w_sq / (4.0 * g * g) + self.beta * self.var * self.pole() / (d * d)
    }

    fn second_derivative(&self, g: f64) -> f64 {
        let d = g - self.pole();
        self.w_sq / (2.0 * g * g * g) + 2.0 * self.beta * self.var * self.pole() / (d * d * d)
    }

    /// Interval `(lo, hi)` with `f'(lo) < 0 ≤ f'(hi)`.
    fn bracket(&self) -> Result<(f64, f64)> {
        let pole = self.pole();
        let lo = pole * (1.0 + 1e-12) + 1e-300;
        let mut hi = pole + 1.0_f64.max(pole);
        for _ in 0..2000 {
            if self.derivative(hi) >= 0.0 {
                return Ok((lo, hi));
            }
            hi = pole + 2.0 * (hi - pole);
        }
        Err(Error::RootBracketFailure("no sign change of the first-order condition".into()))
    }

    /// Root of the first-order condition: bisection to `1e-12·max(1, γ)`, then two Newton steps.
    fn root(&self) -> Result<f64> {
        let (mut lo, mut hi) = self.bracket()?;
        for _ in 0..400 {
            if hi - lo <= 1e-12 * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.derivative(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut g = 0.5 * (lo + hi);
        for _ in 0..2 {
            let step = self.derivative(g) / self.second_derivative(g);
            let next = g - step;
            if next > self.pole() && next.is_finite() {
                g = next;
            }
        }
        Ok(g)
    }

    /// Golden-section search on the convex objective, polished with Newton steps.
    fn minimize(&self) -> Result<f64> {
        let (mut a, mut b) = self.bracket()?;
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut fc, mut fd) = (self.value(c), self.value(d));
        for _ in 0..200 {
            if b - a <= 1e-12 * b.max(1.0) {
                break;
            }
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = self.value(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = self.value(d);
            }
        }
        let mut g = 0.5 * (a + b);
        for _ in 0..3 {
            let next = g - self.derivative(g) / self.second_derivative(g);
            if next > self.pole() && next.is_finite() && self.value(next) <= self.value(g) {
                g = next;
            }
        }
        Ok(g)
    }
}

fn mean_variance_dual(ball: &GelbrichBall, w: &DVector<f64>, beta: f64) -> MeanVarianceDual {
    MeanVarianceDual {
        rho_sq: ball.radius * ball.radius,
        nominal: -ball.mean().dot(w),
        w_sq: w.norm_squared(),
        beta,
        var: ball.cov().quad_form(w).max(0.0),
    }
}

fn check_mean_variance(ball: &GelbrichBall, w: &DVector<f64>, beta: f64) -> Result<()> {
    check_w(ball, w)?;
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::BadBeta(beta));
    }
    if ball.weight.is_some() {
        return Err(Error::MahalanobisUnsupported);
    }
    require_pd(ball.cov())
}

/// Worst-case mean-variance risk over the ball, with the minimizing dual multiplier.
pub fn gelbrich_meanvariance_risk_with_multiplier(ball: &GelbrichBall, w: &DVector<f64>, beta: f64) -> Result<(f64, Option<f64>)> {
    check_mean_variance(ball, w, beta)?;
    if is_zero(w) {
        return Ok((0.0, None));
    }
    if ball.radius == 0.0 {
        return Ok((mean_variance(&ball.center, w, beta), None));
    }
    let dual = mean_variance_dual(ball, w, beta);
    let g = dual.minimize()?;
    Ok((dual.value(g), Some(g)))
}

/// Worst-case `E[−wᵀξ] + β Var(−wᵀξ)` over the ball.
pub fn gelbrich_meanvariance_risk(ball: &GelbrichBall, w: &DVector<f64>, beta: f64) -> Result<f64> {
    Ok(gelbrich_meanvariance_risk_with_multiplier(ball, w, beta)?.0)
}

/// Mean and covariance attaining [`gelbrich_meanvariance_risk`].
pub fn worst_case_moments_meanvariance(ball: &GelbrichBall, w: &DVector<f64>, beta: f64) -> Result<MomentPair> {
    check_mean_variance(ball, w, beta)?;
    if is_zero(w) {
        return Err(Error::ZeroPortfolio);
    }
    if ball.radius == 0.0 {
        return Ok(ball.center.clone());
    }
    let dual = mean_variance_dual(ball, w, beta);
    let g = dual.root()?;
    let mean = ball.mean() - w / (2.0 * g);
    // (I − βwwᵀ/γ)⁻¹ = I + βwwᵀ/(γ − β‖w‖²)
    let n = w.len();
    let k = nalgebra::DMatrix::identity(n, n) + (w * w.transpose()) * (beta / (g - dual.pole()));
    MomentPair::new(mean, ball.cov().congruence(&k))
}
