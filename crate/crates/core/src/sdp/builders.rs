//! Worst-case expectations and risks of nonlinear losses over a Gelbrich ball, compiled to
//! standard-form SDPs.
//!
//! Every program shares the same skeleton: a quadratic majorant `y0 + 2yᵀξ + ξᵀYξ ≥ ℓ(ξ)` whose
//! worst-case expectation is bounded through the dual multiplier `γ` of the distance constraint,
//!
//! ```text
//! y0 + γ(ρ² − ‖μ̂‖² − Tr Σ̂) + z + Tr Z
//! [γI − Y, γΣ̂^{1/2}; γΣ̂^{1/2}, Z] ⪰ 0,   [γI − Y, γμ̂ + y; (γμ̂ + y)ᵀ, z] ⪰ 0,
//! ```
//!
//! and the loss class only decides how the majorization is certified.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sqrtm, SymMatrix};
use crate::metric::{dmat_serde, dvec_serde, GelbrichBall};
use crate::sdp::{LinExpr, Model, SdpProblem, SymExpr};

/// Coefficients of the quadratic majorant `y0 + 2yᵀξ + ξᵀYξ`.
#[derive(Debug, Clone)]
pub struct Majorant {
    pub y0: LinExpr,
    pub y: Vec<LinExpr>,
    pub big_y: SymExpr,
}

impl Majorant {
    /// Reads `[Y, y; yᵀ, y0]` off a symmetric `(n+1)`-dimensional expression.
    pub fn from_lifted(s: &SymExpr) -> Self {
        let n = s.dim() - 1;
        let mut big_y = SymExpr::zeros(n);
        for j in 0..n {
            for i in 0..=j {
                big_y.set(i, j, s.get(i, j).clone());
            }
        }
        Majorant { y0: s.get(n, n).clone(), y: (0..n).map(|i| s.get(i, n).clone()).collect(), big_y }
    }

    /// `[Y + A, y + b; (y + b)ᵀ, y0 + c]`.
    pub fn lifted_plus(&self, a: &SymExpr, b: &[LinExpr], c: &LinExpr) -> SymExpr {
        let col: Vec<LinExpr> = self.y.iter().zip(b).map(|(y, b)| y + b).collect();
        SymExpr::block2(&self.big_y.plus(a), &[col], &SymExpr::scalar_identity(1, &(&self.y0 + c)))
    }
}

fn check_radius(ball: &GelbrichBall) -> Result<()> {
    if ball.weight.is_some() {
        return Err(Error::MahalanobisUnsupported);
    }
    if ball.radius == 0.0 {
        return Err(Error::ZeroRadius);
    }
    Ok(())
}

fn check_level(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::BadBeta(beta))
    }
}

fn constants(v: &DVector<f64>) -> Vec<LinExpr> {
    v.iter().map(|&x| LinExpr::constant(x)).collect()
}

/// Adds the two distance LMIs for the majorant `cert` and returns the worst-case expectation bound.
pub fn expectation_bound(m: &mut Model, ball: &GelbrichBall, cert: &Majorant) -> Result<LinExpr> {
    check_radius(ball)?;
    let n = ball.dim();
    if cert.y.len() != n || cert.big_y.dim() != n {
        return Err(Error::DimMismatch { expected: n, found: cert.y.len() });
    }
    let root = sqrtm(ball.cov())?;
    let gamma = m.nonneg();
    let top = SymExpr::scalar_identity(n, &gamma).minus(&cert.big_y);
    let cols: Vec<Vec<LinExpr>> = (0..n).map(|j| (0..n).map(|i| gamma.scaled(root.get(i, j))).collect()).collect();
    let big_z = m.lmi_with_corner(&top, &cols, n);
    let col: Vec<LinExpr> = (0..n).map(|i| &gamma.scaled(ball.mean()[i]) + &cert.y[i]).collect();
    let z = m.lmi_with_corner(&top, &[col], 1);
    let mut bound = cert.y0.clone();
    bound.add_scaled(&gamma, ball.radius * ball.radius - ball.mean().norm_squared() - ball.cov().trace());
    bound.add_scaled(z.get(0, 0), 1.0);
    bound.add_scaled(&big_z.trace(), 1.0);
    Ok(bound)
}

/// Worst-case expectation of any loss whose quadratic majorants are certified by `certify`,
/// which declares the majorant in the model together with its side constraints.
pub fn build_wc_expectation(ball: &GelbrichBall, certify: impl FnOnce(&mut Model) -> Result<Majorant>) -> Result<SdpProblem> {
    check_radius(ball)?;
    let mut m = Model::new();
    let cert = certify(&mut m)?;
    let bound = expectation_bound(&mut m, ball, &cert)?;
    m.minimize(bound);
    Ok(m.compile()?.problem)
}

/// Piecewise-linear concave loss `ℓ(ξ) = −wᵀ max{Aξ + a, Bξ + b}` (elementwise max).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyhedralLoss {
    #[serde(with = "dmat_serde")]
    pub a_mat: DMatrix<f64>,
    #[serde(with = "dmat_serde")]
    pub b_mat: DMatrix<f64>,
    #[serde(with = "dvec_serde")]
    pub a_vec: DVector<f64>,
    #[serde(with = "dvec_serde")]
    pub b_vec: DVector<f64>,
    #[serde(with = "dvec_serde")]
    pub w: DVector<f64>,
}

impl PolyhedralLoss {
    pub fn eval(&self, xi: &DVector<f64>) -> f64 {
        let u = &self.a_mat * xi + &self.a_vec;
        let v = &self.b_mat * xi + &self.b_vec;
        -self.w.iter().zip(u.iter().zip(v.iter())).map(|(w, (u, v))| w * u.max(*v)).sum::<f64>()
    }

    fn validate(&self, n: usize) -> Result<()> {
        let k = self.w.len();
        for (r, c) in [self.a_mat.shape(), self.b_mat.shape()] {
            if r != k {
                return Err(Error::DimMismatch { expected: k, found: r });
            }
            if c != n {
                return Err(Error::DimMismatch { expected: n, found: c });
            }
        }
        for len in [self.a_vec.len(), self.b_vec.len()] {
            if len != k {
                return Err(Error::DimMismatch { expected: k, found: len });
            }
        }
        if self.w.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidInput("piecewise-linear weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Worst-case VaR at tail probability `beta` of a [`PolyhedralLoss`]; minimizes `τ`.
pub fn build_poly_var(ball: &GelbrichBall, loss: &PolyhedralLoss, beta: f64) -> Result<SdpProblem> {
    check_level(beta)?;
    check_radius(ball)?;
    let n = ball.dim();
    loss.validate(n)?;
    let k = loss.w.len();
    let mut m = Model::new();
    let lifted = m.psd(n + 1).expr();
    let cert = Majorant::from_lifted(&lifted);
    let tau = m.free();
    let eta = m.nonneg();
    let zeta: Vec<LinExpr> = (0..k).map(|_| m.nonneg()).collect();
    for (z, &w) in zeta.iter().zip(loss.w.iter()) {
        m.le(z.clone(), w);
    }
    let diff = &loss.a_mat - &loss.b_mat;
    let btw = loss.b_mat.transpose() * &loss.w;
    let v: Vec<LinExpr> = (0..n)
        .map(|i| {
            let mut e = LinExpr::combination((0..k).map(|r| (0.5 * diff[(r, i)], &zeta[r])));
            e.add_constant(0.5 * btw[i]);
            e
        })
        .collect();
    let ab = &loss.a_vec - &loss.b_vec;
    let mut v0 = &tau + &LinExpr::combination((0..k).map(|r| (ab[r], &zeta[r])));
    v0.add_constant(loss.b_vec.dot(&loss.w));
    m.lmi(&cert.lifted_plus(&SymExpr::zeros(n), &v, &(&v0 - &eta)));
    let bound = expectation_bound(&mut m, ball, &cert)?;
    m.le(&bound - &eta.scaled(beta), 0.0);
    m.minimize(tau);
    Ok(m.compile()?.problem)
}

/// Worst-case CVaR of a [`PolyhedralLoss`]; the same program as [`build_poly_var`].
pub fn build_poly_cvar(ball: &GelbrichBall, loss: &PolyhedralLoss, beta: f64) -> Result<SdpProblem> {
    build_poly_var(ball, loss, beta)
}

/// Delta-gamma loss `ℓ(ξ) = −θ − Δᵀξ − ½ ξᵀΓξ`; `Γ` may be indefinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticLoss {
    pub theta: f64,
    #[serde(with = "dvec_serde")]
    pub delta: DVector<f64>,
    pub gamma: SymMatrix,
}

impl QuadraticLoss {
    pub fn eval(&self, xi: &DVector<f64>) -> f64 {
        -self.theta - self.delta.dot(xi) - 0.5 * self.gamma.quad_form(xi)
    }
}

/// Worst-case VaR at tail probability `beta` of a [`QuadraticLoss`]; minimizes `τ`.
pub fn build_quad_var(ball: &GelbrichBall, loss: &QuadraticLoss, beta: f64) -> Result<SdpProblem> {
    check_level(beta)?;
    check_radius(ball)?;
    let n = ball.dim();
    for found in [loss.delta.len(), loss.gamma.dim()] {
        if found != n {
            return Err(Error::DimMismatch { expected: n, found });
        }
    }
    let mut m = Model::new();
    let lifted = m.psd(n + 1).expr();
    let cert = Majorant::from_lifted(&lifted);
    let tau = m.free();
    let eta = m.nonneg();
    let mut corner = tau.scaled(2.0) - eta.clone();
    corner.add_constant(2.0 * loss.theta);
    m.lmi(&cert.lifted_plus(&SymExpr::from_constant(&loss.gamma), &constants(&loss.delta), &corner));
    let bound = expectation_bound(&mut m, ball, &cert)?;
    m.le(&bound - &eta.scaled(beta), 0.0);
    m.minimize(tau);
    Ok(m.compile()?.problem)
}

/// Worst-case CVaR of a [`QuadraticLoss`]; the same program as [`build_quad_var`].
pub fn build_quad_cvar(ball: &GelbrichBall, loss: &QuadraticLoss, beta: f64) -> Result<SdpProblem> {
    build_quad_var(ball, loss, beta)
}

/// Worst-case `E|wᵀξ|^p` for `p ∈ {1, 2}`.
pub fn build_tracking_error(ball: &GelbrichBall, w: &DVector<f64>, p: u32) -> Result<SdpProblem> {
    if p != 1 && p != 2 {
        return Err(Error::BadP(p));
    }
    let n = ball.dim();
    if w.len() != n {
        return Err(Error::DimMismatch { expected: n, found: w.len() });
    }
    build_wc_expectation(ball, |m| {
        let big_y = m.psd(n).expr();
        if p == 1 {
            let y = m.free_vec(n);
            let y0 = m.free();
            let cert = Majorant { y0, y, big_y };
            for sign in [-0.5, 0.5] {
                m.lmi(&cert.lifted_plus(&SymExpr::zeros(n), &constants(&(w * sign)), &LinExpr::zero()));
            }
            Ok(cert)
        } else {
            // [M, y; yᵀ, y0] ⪰ 0 and Y − M ⪰ wwᵀ
            let lifted = m.psd(n + 1).expr();
            let inner = Majorant::from_lifted(&lifted);
            let top = big_y.minus(&inner.big_y);
            m.lmi(&SymExpr::block2(&top, &[constants(w)], &SymExpr::from_constant(&SymMatrix::identity(1))));
            Ok(Majorant { y0: inner.y0, y: inner.y, big_y })
        }
    })
}

/// Event `{ξ : ξᵀSξ + 2sᵀξ + s0 ≥ 0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticEvent {
    pub s_mat: SymMatrix,
    #[serde(with = "dvec_serde")]
    pub s_vec: DVector<f64>,
    pub s0: f64,
}

impl QuadraticEvent {
    /// Half-space `{wᵀξ ≥ t}`.
    pub fn half_space(w: &DVector<f64>, t: f64) -> Self {
        QuadraticEvent { s_mat: SymMatrix::zeros(w.len()), s_vec: w * 0.5, s0: -t }
    }

    pub fn contains(&self, xi: &DVector<f64>) -> bool {
        self.s_mat.quad_form(xi) + 2.0 * self.s_vec.dot(xi) + self.s0 >= 0.0
    }
}

/// Worst-case probability of a [`QuadraticEvent`]. The majorant must dominate the indicator, i.e.
/// be nonnegative everywhere and at least 1 on the event; the latter is certified by the S-lemma
/// with one nonnegative multiplier.
pub fn build_wc_probability(ball: &GelbrichBall, event: &QuadraticEvent) -> Result<SdpProblem> {
    let n = ball.dim();
    for found in [event.s_vec.len(), event.s_mat.dim()] {
        if found != n {
            return Err(Error::DimMismatch { expected: n, found });
        }
    }
    build_wc_expectation(ball, |m| {
        let lifted = m.psd(n + 1).expr();
        let cert = Majorant::from_lifted(&lifted);
        let lambda = m.nonneg();
        let a = SymExpr::scalar_times(&lambda, &event.s_mat.scale(-1.0));
        let b: Vec<LinExpr> = event.s_vec.iter().map(|&s| lambda.scaled(-s)).collect();
        let mut c = lambda.scaled(-event.s0);
        c.add_constant(-1.0);
        m.lmi(&cert.lifted_plus(&a, &b, &c));
        Ok(cert)
    })
}

/// One piece `ξᵀQξ + 2qᵀξ + q0` of a piecewise quadratic loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticPiece {
    pub q_mat: SymMatrix,
    #[serde(with = "dvec_serde")]
    pub q_vec: DVector<f64>,
    pub q0: f64,
}

impl QuadraticPiece {
    pub fn eval(&self, xi: &DVector<f64>) -> f64 {
        self.q_mat.quad_form(xi) + 2.0 * self.q_vec.dot(xi) + self.q0
    }
}

/// Worst-case `E max_j (ξᵀQ_jξ + 2q_jᵀξ + q0_j)`.
pub fn build_piecewise_quadratic_expectation(ball: &GelbrichBall, pieces: &[QuadraticPiece]) -> Result<SdpProblem> {
    let n = ball.dim();
    let (first, rest) = pieces.split_first().ok_or(Error::EmptyPieces)?;
    for p in pieces {
        for found in [p.q_vec.len(), p.q_mat.dim()] {
            if found != n {
                return Err(Error::DimMismatch { expected: n, found });
            }
        }
    }
    build_wc_expectation(ball, |m| {
        // The majorant is the first piece plus a PSD lift, so Y needs no free splitting.
        let lifted = m.psd(n + 1).expr();
        let slack = Majorant::from_lifted(&lifted);
        let cert = Majorant {
            y0: &slack.y0 + &LinExpr::constant(first.q0),
            y: slack.y.iter().zip(first.q_vec.iter()).map(|(y, &q)| y + &LinExpr::constant(q)).collect(),
            big_y: slack.big_y.plus(&SymExpr::from_constant(&first.q_mat)),
        };
        for p in rest {
            let neg_q: Vec<LinExpr> = p.q_vec.iter().map(|&q| LinExpr::constant(-q)).collect();
            m.lmi(&cert.lifted_plus(&SymExpr::from_constant(&p.q_mat.scale(-1.0)), &neg_q, &LinExpr::constant(-p.q0)));
        }
        Ok(cert)
    })
}

/// JSON description of a robust program over a Gelbrich ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDescription {
    pub ball: GelbrichBall,
    pub loss: LossSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum LossSpec {
    PolyVar {
        #[serde(flatten)]
        loss: PolyhedralLoss,
        beta: f64,
    },
    PolyCvar {
        #[serde(flatten)]
        loss: PolyhedralLoss,
        beta: f64,
    },
    QuadVar {
        #[serde(flatten)]
        loss: QuadraticLoss,
        beta: f64,
    },
    QuadCvar {
        #[serde(flatten)]
        loss: QuadraticLoss,
        beta: f64,
    },
    Tracking {
        #[serde(with = "dvec_serde")]
        w: DVector<f64>,
        p: u32,
    },
    Probability {
        #[serde(flatten)]
        event: QuadraticEvent,
    },
    PiecewiseQuadratic {
        pieces: Vec<QuadraticPiece>,
    },
}

impl ProblemDescription {
    pub fn build(&self) -> Result<SdpProblem> {
        self.ball.validate()?;
        let b = &self.ball;
        match &self.loss {
            LossSpec::PolyVar { loss, beta } => build_poly_var(b, loss, *beta),
            LossSpec::PolyCvar { loss, beta } => build_poly_cvar(b, loss, *beta),
            LossSpec::QuadVar { loss, beta } => build_quad_var(b, loss, *beta),
            LossSpec::QuadCvar { loss, beta } => build_quad_cvar(b, loss, *beta),
            LossSpec::Tracking { w, p } => build_tracking_error(b, w, *p),
            LossSpec::Probability { event } => build_wc_probability(b, event),
            LossSpec::PiecewiseQuadratic { pieces } => build_piecewise_quadratic_expectation(b, pieces),
        }
    }
}
