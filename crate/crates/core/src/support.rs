//! Support functions of the Gelbrich moment sets
//! `U = {(μ, Σ) : G((μ, Σ), (μ̂, Σ̂)) ≤ ρ}` and `V = {(μ, Σ + μμᵀ) : (μ, Σ) ∈ U}`,
//! evaluated by a univariate root search on the dual multiplier, plus their SDP forms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sqrtm, sym_eig, SymMatrix};
use crate::metric::{dvec_serde, GelbrichBall, MomentPair};
use crate::sdp::{solve_value, AdmmSettings, LinExpr, Model, SdpProblem, SymExpr};

/// Linear functional `(μ, Σ) ↦ qᵀμ + ⟨Q, Σ⟩` to maximize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportQuery {
    #[serde(with = "dvec_serde")]
    pub mean_weight: DVector<f64>,
    pub moment_weight: SymMatrix,
}

impl SupportQuery {
    pub fn new(mean_weight: DVector<f64>, moment_weight: SymMatrix) -> Self {
        SupportQuery { mean_weight, moment_weight }
    }

    pub fn quadratic(moment_weight: SymMatrix) -> Self {
        SupportQuery { mean_weight: DVector::zeros(moment_weight.dim()), moment_weight }
    }

    pub fn linear(mean_weight: DVector<f64>) -> Self {
        let n = mean_weight.len();
        SupportQuery { mean_weight, moment_weight: SymMatrix::zeros(n) }
    }

    pub fn scale(&self, c: f64) -> Self {
        SupportQuery { mean_weight: &self.mean_weight * c, moment_weight: self.moment_weight.scale(c) }
    }

    pub fn add(&self, other: &SupportQuery) -> Self {
        SupportQuery { mean_weight: &self.mean_weight + &other.mean_weight, moment_weight: self.moment_weight.add(&other.moment_weight) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportMethod {
    /// Zero radius: the set is a single point.
    Center,
    RootFinding,
    /// Outside the root-finding hypotheses (`q = 0`, `Q ⪯ 0`).
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportArgmax {
    Covariance(MomentPair),
    SecondMoment {
        #[serde(with = "dvec_serde")]
        mean: DVector<f64>,
        second_moment: SymMatrix,
    },
}

impl SupportArgmax {
    pub fn mean(&self) -> &DVector<f64> {
        match self {
            SupportArgmax::Covariance(p) => &p.mean,
            SupportArgmax::SecondMoment { mean, .. } => mean,
        }
    }

    /// Covariance of the maximizer, whichever parametrization it is stored in.
    pub fn covariance(&self) -> SymMatrix {
        match self {
            SupportArgmax::Covariance(p) => p.cov.clone(),
            SupportArgmax::SecondMoment { mean, second_moment } => second_moment.sub(&SymMatrix::outer(mean)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportResult {
    pub value: f64,
    /// Optimal dual multiplier; absent on the trivial and corner branches.
    pub gamma_star: Option<f64>,
    pub argmax: SupportArgmax,
    pub method: SupportMethod,
}

fn check(ball: &GelbrichBall, query: &SupportQuery) -> Result<()> {
    let n = ball.dim();
    for found in [query.mean_weight.len(), query.moment_weight.dim()] {
        if found != n {
            return Err(Error::DimMismatch { expected: n, found });
        }
    }
    if query.mean_weight.iter().any(|x| !x.is_finite()) || !query.moment_weight.is_finite() {
        return Err(Error::NonFinite);
    }
    if ball.weight.is_some() {
        return Err(Error::MahalanobisUnsupported);
    }
    let lmin = sym_eig(ball.cov())?.min();
    if lmin <= 1e-12 * ball.cov().max_abs() {
        return Err(Error::SingularCov { min_eig: lmin });
    }
    Ok(())
}

/// The query and ball expressed in the eigenbasis of `Q`.
struct Rotated {
    lambda: Vec<f64>,
    basis: DMatrix<f64>,
    /// `VᵀΣ̂V`
    cov: DMatrix<f64>,
    q: DVector<f64>,
    mean: DVector<f64>,
}

impl Rotated {
    fn new(ball: &GelbrichBall, query: &SupportQuery) -> Result<Self> {
        let eig = sym_eig(&query.moment_weight)?;
        let basis = eig.vectors;
        Ok(Rotated {
            lambda: eig.values.iter().copied().collect(),
            cov: basis.transpose() * ball.cov().as_matrix() * &basis,
            q: basis.transpose() * &query.mean_weight,
            mean: basis.transpose() * ball.mean(),
            basis,
        })
    }

    fn lambda_max(&self) -> f64 {
        self.lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Tr[Σ̂(I − γ(γI − Q)⁻¹)²] = Σ_k (VᵀΣ̂V)_kk λ_k²/(γ − λ_k)²`
    fn bures_term(&self, g: f64) -> f64 {
        self.lambda.iter().enumerate().map(|(k, &l)| self.cov[(k, k)] * (l / (g - l)).powi(2)).sum()
    }

    fn foc_u(&self, g: f64) -> f64 {
        self.q.norm_squared() / (4.0 * g * g) + self.bures_term(g)
    }

    /// `‖μ̂ − (γI − Q)⁻¹(q/2 + γμ̂)‖² = Σ_k (λ_k m_k + q_k/2)²/(γ − λ_k)²`
    fn foc_v(&self, g: f64) -> f64 {
        let mean_term: f64 = self.lambda.iter().enumerate().map(|(k, &l)| ((l * self.mean[k] + 0.5 * self.q[k]) / (g - l)).powi(2)).sum();
        mean_term + self.bures_term(g)
    }

    /// `(I − Q/γ)⁻¹Σ̂(I − Q/γ)⁻¹` in the original coordinates.
    fn stretched_cov(&self, g: f64) -> SymMatrix {
        let d = DVector::from_iterator(self.lambda.len(), self.lambda.iter().map(|&l| g / (g - l)));
        let inner = DMatrix::from_fn(d.len(), d.len(), |i, j| d[i] * self.cov[(i, j)] * d[j]);
        SymMatrix::new(&self.basis * inner * self.basis.transpose())
    }
}

/// Root of a strictly decreasing `f` on `(base, ∞)` with `f → ∞` at `base` and `f → 0` at `∞`.
fn decreasing_root(f: impl Fn(f64) -> f64, base: f64, target: f64) -> Result<f64> {
    let mut lo = base * (1.0 + 1e-9) + 1e-12;
    let mut tries = 0;
    while f(lo) <= target {
        lo = base + (lo - base) / 1024.0;
        tries += 1;
        if tries > 100 || lo <= base {
            return Err(Error::RootBracketFailure("left end does not exceed the radius".into()));
        }
    }
    let mut hi = lo + 1.0;
    tries = 0;
    while f(hi) >= target {
        hi = base + 2.0 * (hi - base);
        tries += 1;
        if tries > 200 {
            return Err(Error::RootBracketFailure("no sign change while doubling".into()));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn evaluate(query: &SupportQuery, mean: &DVector<f64>, moment: &SymMatrix) -> f64 {
    query.mean_weight.dot(mean) + query.moment_weight.inner(moment)
}

fn center_result(ball: &GelbrichBall, query: &SupportQuery, second_moment: bool) -> SupportResult {
    let argmax = if second_moment {
        SupportArgmax::SecondMoment { mean: ball.mean().clone(), second_moment: ball.center.second_moment() }
    } else {
        SupportArgmax::Covariance(ball.center.clone())
    };
    let moment = if second_moment { ball.center.second_moment() } else { ball.cov().clone() };
    SupportResult { value: evaluate(query, ball.mean(), &moment), gamma_star: None, argmax, method: SupportMethod::Center }
}

fn u_at(ball: &GelbrichBall, query: &SupportQuery, rot: &Rotated, g: f64, method: SupportMethod) -> Result<SupportResult> {
    let mean = ball.mean() + &query.mean_weight / (2.0 * g);
    let cov = rot.stretched_cov(g);
    let value = evaluate(query, &mean, &cov);
    Ok(SupportResult { value, gamma_star: Some(g), argmax: SupportArgmax::Covariance(MomentPair::new(mean, cov)?), method })
}

/// `sup { qᵀμ + ⟨Q, Σ⟩ : (μ, Σ) ∈ U }` and its unique maximizer. Requires `q ≠ 0` or `λmax(Q) > 0`;
/// see [`support_u_with_fallback`] for the remaining regime.
pub fn support_u(ball: &GelbrichBall, query: &SupportQuery) -> Result<SupportResult> {
    check(ball, query)?;
    if ball.radius == 0.0 {
        return Ok(center_result(ball, query, false));
    }
    let rot = Rotated::new(ball, query)?;
    let lmax = rot.lambda_max();
    if query.mean_weight.iter().all(|&x| x == 0.0) && lmax <= 0.0 {
        return Err(Error::HypothesisViolated("q = 0 and Q has no positive eigenvalue".into()));
    }
    let g = decreasing_root(|g| rot.foc_u(g), lmax.max(0.0), ball.radius * ball.radius)?;
    u_at(ball, query, &rot, g, SupportMethod::RootFinding)
}

/// [`support_u`], extended to `q = 0`, `Q ⪯ 0`.
///
/// There `⟨Q, Σ⟩ ≤ 0`, and the first-order condition is only solvable when `ρ²` is below its limit
/// `Σ_{λ_k<0} (VᵀΣ̂V)_kk` at `γ → 0`. Otherwise the maximum `0` is attained by the limit point
/// `Σ⋆ = P Σ̂ P`, with `P` the projector onto `ker Q`, which lies inside the ball.
pub fn support_u_with_fallback(ball: &GelbrichBall, query: &SupportQuery) -> Result<SupportResult> {
    match support_u(ball, query) {
        Err(Error::HypothesisViolated(_)) => {}
        other => return other,
    }
    let rot = Rotated::new(ball, query)?;
    let rho_sq = ball.radius * ball.radius;
    let limit = rot.bures_term(f64::MIN_POSITIVE);
    if rho_sq < limit {
        let g = decreasing_root(|g| rot.bures_term(g), 0.0, rho_sq)?;
        return u_at(ball, query, &rot, g, SupportMethod::Fallback);
    }
    let tol = 1e-12 * query.moment_weight.max_abs().max(1.0);
    let keep = DVector::from_iterator(rot.lambda.len(), rot.lambda.iter().map(|&l| if l.abs() <= tol { 1.0 } else { 0.0 }));
    let inner = DMatrix::from_fn(keep.len(), keep.len(), |i, j| keep[i] * rot.cov[(i, j)] * keep[j]);
    let cov = SymMatrix::new(&rot.basis * inner * rot.basis.transpose());
    let mean = ball.mean().clone();
    let value = evaluate(query, &mean, &cov);
    Ok(SupportResult { value, gamma_star: None, argmax: SupportArgmax::Covariance(MomentPair::new(mean, cov)?), method: SupportMethod::Fallback })
}

/// `sup { qᵀμ + ⟨Q, M⟩ : (μ, M) ∈ V }` and its unique maximizer. Requires `λmax(Q) > 0`.
pub fn support_v(ball: &GelbrichBall, query: &SupportQuery) -> Result<SupportResult> {
    check(ball, query)?;
    if ball.radius == 0.0 {
        return Ok(center_result(ball, query, true));
    }
    let rot = Rotated::new(ball, query)?;
    let lmax = rot.lambda_max();
    if lmax <= 0.0 {
        return Err(Error::HypothesisViolated("Q has no positive eigenvalue".into()));
    }
    // Every summand of the left-hand side is strictly decreasing on (λmax, ∞), so the root is unique.
    let g = decreasing_root(|g| rot.foc_v(g), lmax, ball.radius * ball.radius)?;
    let rotated_mean = DVector::from_iterator(
        rot.lambda.len(),
        rot.lambda.iter().enumerate().map(|(k, &l)| (g * rot.mean[k] + 0.5 * rot.q[k]) / (g - l)),
    );
    let mean = &rot.basis * rotated_mean;
    let second_moment = rot.stretched_cov(g).add(&SymMatrix::outer(&mean));
    let value = evaluate(query, &mean, &second_moment);
    Ok(SupportResult { value, gamma_star: Some(g), argmax: SupportArgmax::SecondMoment { mean, second_moment }, method: SupportMethod::RootFinding })
}

/// `γI − Q` and the columns of `γΣ̂^{1/2}`.
fn bures_lmi_parts(gamma: &LinExpr, q: &SymMatrix, cov_sqrt: &SymMatrix) -> (SymExpr, Vec<Vec<LinExpr>>) {
    let n = q.dim();
    let a = SymExpr::scalar_identity(n, gamma).minus(&SymExpr::from_constant(q));
    let cols = (0..n).map(|j| (0..n).map(|i| gamma.scaled(cov_sqrt.get(i, j))).collect()).collect();
    (a, cols)
}

/// Conic program whose value is the support function of `U`:
/// `min qᵀμ̂ + τ + γ(ρ² − Tr Σ̂) + Tr Z` over `γ, τ ≥ 0` with
/// `[γI − Q, γΣ̂^{1/2}; γΣ̂^{1/2}, Z] ⪰ 0` and `‖(q, τ − γ)‖ ≤ τ + γ` (as an arrow LMI).
pub fn support_u_program(ball: &GelbrichBall, query: &SupportQuery) -> Result<SdpProblem> {
    check(ball, query)?;
    let n = ball.dim();
    let root = sqrtm(ball.cov())?;
    let mut m = Model::new();
    let gamma = m.nonneg();
    let tau = m.nonneg();
    let (a, cols) = bures_lmi_parts(&gamma, &query.moment_weight, &root);
    let z = m.lmi_with_corner(&a, &cols, n);
    let mut u: Vec<LinExpr> = query.mean_weight.iter().map(|&x| LinExpr::constant(x)).collect();
    u.push(&tau - &gamma);
    m.lmi(&SymExpr::arrow(&(&tau + &gamma), &u));
    let mut obj = LinExpr::constant(query.mean_weight.dot(ball.mean()));
    obj.add_scaled(&tau, 1.0);
    obj.add_scaled(&gamma, ball.radius * ball.radius - ball.cov().trace());
    obj.add_scaled(&z.trace(), 1.0);
    m.minimize(obj);
    Ok(m.compile()?.problem)
}

/// Conic program whose value is the support function of `V`:
/// `min γ(ρ² − ‖μ̂‖² − Tr Σ̂) + Tr Z + z` over `γ ≥ 0` with
/// `[γI − Q, γΣ̂^{1/2}; γΣ̂^{1/2}, Z] ⪰ 0` and `[γI − Q, γμ̂ + q/2; (γμ̂ + q/2)ᵀ, z] ⪰ 0`.
pub fn support_v_program(ball: &GelbrichBall, query: &SupportQuery) -> Result<SdpProblem> {
    check(ball, query)?;
    let n = ball.dim();
    let root = sqrtm(ball.cov())?;
    let mut m = Model::new();
    let gamma = m.nonneg();
    let (a, cols) = bures_lmi_parts(&gamma, &query.moment_weight, &root);
    let big_z = m.lmi_with_corner(&a, &cols, n);
    let col: Vec<LinExpr> = (0..n)
        .map(|i| {
            let mut e = gamma.scaled(ball.mean()[i]);
            e.add_constant(0.5 * query.mean_weight[i]);
            e
        })
        .collect();
    let z = m.lmi_with_corner(&a, &[col], 1);
    let mut obj = gamma.scaled(ball.radius * ball.radius - ball.mean().norm_squared() - ball.cov().trace());
    obj.add_scaled(&big_z.trace(), 1.0);
    obj.add_scaled(z.get(0, 0), 1.0);
    m.minimize(obj);
    Ok(m.compile()?.problem)
}

/// Largest dimension accepted by the SDP cross-checks.
pub const SUPPORT_SDP_MAX_DIM: usize = 8;

fn check_sdp_size(n: usize) -> Result<()> {
    if n > SUPPORT_SDP_MAX_DIM {
        return Err(Error::TooLarge(format!("dimension {n} exceeds {SUPPORT_SDP_MAX_DIM}")));
    }
    Ok(())
}

/// Support function of `U` through [`support_u_program`] and the ADMM solver.
pub fn support_u_sdp(ball: &GelbrichBall, query: &SupportQuery, settings: &AdmmSettings) -> Result<f64> {
    check_sdp_size(ball.dim())?;
    solve_value(&support_u_program(ball, query)?, settings)
}

/// Support function of `V` through [`support_v_program`] and the ADMM solver.
pub fn support_v_sdp(ball: &GelbrichBall, query: &SupportQuery, settings: &AdmmSettings) -> Result<f64> {
    check_sdp_size(ball.dim())?;
    solve_value(&support_v_program(ball, query)?, settings)
}
