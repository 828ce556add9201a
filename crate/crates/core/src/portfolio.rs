//! Portfolio selection under Gelbrich risk: the regularized Markowitz program and
//! index tracking, solved by projected first-order methods.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eig;
use crate::linear_risk::gelbrich_risk_linear;
use crate::metric::{dvec_serde, GelbrichBall};

/// Portfolio constraints; every variant contains the budget `Σ wᵢ = 1` in some form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeasibleSet {
    /// `eᵀw = 1`, `w ≥ lower`.
    Simplex {
        #[serde(with = "dvec_serde")]
        lower: DVector<f64>,
    },
    /// Tracking portfolios: `Σ_{i<n} wᵢ = 1`, `wᵢ ≥ 0`, and the index weight `w_n = −1`.
    FixedIndexSimplex { dim: usize },
    /// `eᵀw = 1`, `lower ≤ w ≤ upper`.
    BoxBudget {
        #[serde(with = "dvec_serde")]
        lower: DVector<f64>,
        #[serde(with = "dvec_serde")]
        upper: DVector<f64>,
    },
}

impl FeasibleSet {
    /// Long-only fully invested portfolios.
    pub fn long_only(n: usize) -> Self {
        FeasibleSet::Simplex { lower: DVector::zeros(n) }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Simplex { lower } | FeasibleSet::BoxBudget { lower, .. } => lower.len(),
            FeasibleSet::FixedIndexSimplex { dim } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InfeasibleSet(m.into()));
        match self {
            FeasibleSet::Simplex { lower } => {
                if lower.is_empty() || lower.iter().any(|x| !x.is_finite()) || lower.sum() > 1.0 + 1e-12 {
                    return bad("lower bounds must be finite and sum to at most 1");
                }
            }
            FeasibleSet::FixedIndexSimplex { dim } => {
                if *dim < 2 {
                    return bad("tracking needs at least one asset besides the index");
                }
            }
            FeasibleSet::BoxBudget { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return bad("bound vectors must be nonempty and of equal length");
                }
                if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
                    return bad("bounds must be finite with lower <= upper");
                }
                if lower.sum() > 1.0 + 1e-12 || upper.sum() < 1.0 - 1e-12 {
                    return bad("budget is outside the box");
                }
            }
        }
        Ok(())
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            FeasibleSet::Simplex { lower } => lower + project_simplex(&(v - lower), 1.0 - lower.sum()),
            FeasibleSet::FixedIndexSimplex { dim } => {
                let head = project_simplex(&v.rows(0, dim - 1).into_owned(), 1.0);
                let mut w = DVector::from_element(*dim, -1.0);
                w.rows_mut(0, dim - 1).copy_from(&head);
                w
            }
            FeasibleSet::BoxBudget { lower, upper } => project_box_budget(v, lower, upper),
        }
    }

    pub fn contains(&self, w: &DVector<f64>, tol: f64) -> bool {
        if w.len() != self.dim() {
            return false;
        }
        match self {
            FeasibleSet::Simplex { lower } => (w.sum() - 1.0).abs() <= tol && w.iter().zip(lower.iter()).all(|(x, l)| *x >= l - tol),
            FeasibleSet::FixedIndexSimplex { dim } => {
                let head = w.rows(0, dim - 1);
                (head.sum() - 1.0).abs() <= tol && head.iter().all(|&x| x >= -tol) && (w[dim - 1] + 1.0).abs() <= tol
            }
            FeasibleSet::BoxBudget { lower, upper } => {
                (w.sum() - 1.0).abs() <= tol && (0..w.len()).all(|i| w[i] >= lower[i] - tol && w[i] <= upper[i] + tol)
            }
        }
    }

    /// Deterministic feasible starting point.
    pub fn center(&self) -> DVector<f64> {
        let n = self.dim();
        match self {
            FeasibleSet::FixedIndexSimplex { .. } => {
                let mut w = DVector::from_element(n, 1.0 / (n - 1) as f64);
                w[n - 1] = -1.0;
                w
            }
            _ => self.project(&DVector::from_element(n, 1.0 / n as f64)),
        }
    }
}

/// Projection onto `{x ≥ 0, Σx = mass}` by sorting and thresholding.
pub fn project_simplex(v: &DVector<f64>, mass: f64) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - mass) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

/// Projection onto `{lower ≤ x ≤ upper, Σx = 1}`: bisection on the shift of a clipped translate.
fn project_box_budget(v: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    let clip = |t: f64| DVector::from_fn(v.len(), |i, _| (v[i] - t).clamp(lower[i], upper[i]));
    let span = (v - lower).amax().max((v - upper).amax()) + 1.0;
    let (mut lo, mut hi) = (v.min() - upper.max() - span, v.max() - lower.min() + span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if clip(mid).sum() > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    clip(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeOptions {
    pub max_iter: usize,
    /// Converged once the best objective improves by less than `stall_tol` (relative) over `stall_window` iterations.
    pub stall_window: usize,
    pub stall_tol: f64,
    pub record_trace: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions { max_iter: 10_000, stall_window: 200, stall_tol: 1e-10, record_trace: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    #[serde(with = "dvec_serde")]
    pub w_star: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
}

/// Accelerated projected gradient with backtracking, gradient restarts and best-iterate tracking.
/// `oracle` returns the objective and a (sub)gradient.
fn projected_descent(
    set: &FeasibleSet,
    opts: &OptimizeOptions,
    oracle: impl Fn(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
) -> Result<(DVector<f64>, usize, Termination, Option<Vec<f64>>)> {
    let mut x = set.center();
    let (mut fx, g0) = oracle(&x)?;
    let mut step = 1.0 / (g0.norm() + 1.0);
    let (mut best, mut best_f) = (x.clone(), fx);
    let mut history = vec![best_f];
    let mut trace = opts.record_trace.then(|| vec![fx]);
    let mut y = x.clone();
    let mut theta: f64 = 1.0;
    for k in 1..=opts.max_iter {
        let (fy, gy) = oracle(&y)?;
        let mut next;
        let mut f_next;
        let mut shrinks = 0;
        loop {
            next = set.project(&(&y - &gy * step));
            f_next = oracle(&next)?.0;
            let d = &next - &y;
            if f_next <= fy + gy.dot(&d) + d.norm_squared() / (2.0 * step) + 4.0 * f64::EPSILON * fy.abs() || shrinks > 60 {
                break;
            }
            step *= 0.5;
            shrinks += 1;
        }
        if f_next > fx {
            // Restart the momentum from the last accepted point.
            y = x.clone();
            theta = 1.0;
        } else {
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            y = &next + (&next - &x) * ((theta - 1.0) / theta_next);
            theta = theta_next;
            x = next;
            fx = f_next;
            step *= 1.1;
        }
        if fx < best_f {
            best_f = fx;
            best = x.clone();
        }
        if let Some(t) = trace.as_mut() {
            t.push(best_f);
        }
        history.push(best_f);
        if k >= opts.stall_window && history[k - opts.stall_window] - best_f < opts.stall_tol * best_f.abs().max(f64::MIN_POSITIVE) {
            return Ok((best, k, Termination::Converged, trace));
        }
    }
    Ok((best, opts.max_iter, Termination::IterationCap, trace))
}

fn check_set(ball: &GelbrichBall, feasible: &FeasibleSet) -> Result<()> {
    feasible.validate()?;
    if feasible.dim() != ball.dim() {
        return Err(Error::DimMismatch { expected: ball.dim(), found: feasible.dim() });
    }
    Ok(())
}

/// `min_{w ∈ Ω} −μ̂ᵀw + α√(wᵀΣ̂w) + ρ√(1+α²)‖w‖` (Mahalanobis dual norm when the ball is weighted).
pub fn minimize_linear_gelbrich(ball: &GelbrichBall, alpha: f64, feasible: &FeasibleSet, opts: &OptimizeOptions) -> Result<OptimizeReport> {
    check_set(ball, feasible)?;
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::NegativeAlpha(alpha));
    }
    let weight_inv = match &ball.weight {
        Some(h) => Some(sym_eig(h)?.map(|l| 1.0 / l)),
        None => None,
    };
    let norm_weight = ball.radius * (1.0 + alpha * alpha).sqrt();
    let cov = ball.cov().as_matrix();
    let oracle = |w: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let mut grad = -ball.mean().clone();
        let mut value = -ball.mean().dot(w);
        let sw = cov * w;
        let sd = w.dot(&sw).max(0.0).sqrt();
        if sd > 0.0 {
            value += alpha * sd;
            grad += sw * (alpha / sd);
        }
        let hw = match &weight_inv {
            Some(hi) => hi.as_matrix() * w,
            None => w.clone(),
        };
        let wn = w.dot(&hw).max(0.0).sqrt();
        if wn > 0.0 {
            value += norm_weight * wn;
            grad += hw * (norm_weight / wn);
        }
        Ok((value, grad))
    };
    let (w, iterations, termination, trace) = projected_descent(feasible, opts, oracle)?;
    let objective = gelbrich_risk_linear(ball, &w, alpha)?.value;
    Ok(OptimizeReport { w_star: w, objective, iterations, termination, trace })
}

/// Worst-case `E|wᵀξ|^p` over the ball and its gradient in `w`.
///
/// For `p = 2` this is the support function of the second-moment set at `(0, wwᵀ)`. With a rank-one
/// weight the root search collapses: `γ⋆ − ‖w‖² = ‖w‖ r / ρ` with `r = √(wᵀM̂w)`, `M̂ = Σ̂ + μ̂μ̂ᵀ`, so
/// the value is `(r + ρ‖w‖)²`; `p = 1` is its square root. Neither needs `Σ̂ ≻ 0`.
pub fn tracking_objective(ball: &GelbrichBall, w: &DVector<f64>, p: u32) -> Result<(f64, DVector<f64>)> {
    if p != 1 && p != 2 {
        return Err(Error::BadP(p));
    }
    if w.len() != ball.dim() {
        return Err(Error::DimMismatch { expected: ball.dim(), found: w.len() });
    }
    let mw = ball.cov().as_matrix() * w + ball.mean() * ball.mean().dot(w);
    let r = w.dot(&mw).max(0.0).sqrt();
    let wn = w.norm();
    let mut grad = DVector::zeros(w.len());
    if r > 0.0 {
        grad += mw / r;
    }
    if wn > 0.0 {
        grad += w * (ball.radius / wn);
    }
    let root = r + ball.radius * wn;
    Ok(if p == 1 { (root, grad) } else { (root * root, grad * (2.0 * root)) })
}

/// Tracking portfolio minimizing the worst-case `E|wᵀξ|^p`.
///
/// The `p = 1` objective is the square root of the `p = 2` one, so both share their minimizers; the
/// descent always runs on the squared form, which stays smooth where the error vanishes.
pub fn minimize_tracking(ball: &GelbrichBall, p: u32, feasible: &FeasibleSet, opts: &OptimizeOptions) -> Result<OptimizeReport> {
    check_set(ball, feasible)?;
    if p != 1 && p != 2 {
        return Err(Error::BadP(p));
    }
    let (w, iterations, termination, trace) = projected_descent(feasible, opts, |w| tracking_objective(ball, w, 2))?;
    let objective = tracking_objective(ball, &w, p)?.0;
    let trace = if p == 1 { trace.map(|t| t.into_iter().map(f64::sqrt).collect()) } else { trace };
    Ok(OptimizeReport { w_star: w, objective, iterations, termination, trace })
}
