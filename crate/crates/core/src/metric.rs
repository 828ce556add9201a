//! Gelbrich distance between mean-covariance pairs, its Mahalanobis variant, the optimal affine
//! pushforward between Gaussians, and two independent oracles (SDP and Monte Carlo) for it.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inv_sqrtm_pd, sqrtm, sym_eig, SymMatrix};
use crate::sdp::{admm_solve, AdmmSettings, LinExpr, Model};

pub(crate) mod dvec_serde {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// Dense matrices as a list of rows.
pub(crate) mod dmat_serde {
    use nalgebra::DMatrix;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }
}

/// Mean vector and covariance matrix of a distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    #[serde(with = "dvec_serde")]
    pub mean: DVector<f64>,
    pub cov: SymMatrix,
}

impl MomentPair {
    /// Validates dimensions and that `cov` is PSD up to the default tolerance.
    pub fn new(mean: DVector<f64>, cov: SymMatrix) -> Result<Self> {
        let p = MomentPair { mean, cov };
        p.validate()?;
        Ok(p)
    }

    pub fn from_slices(mean: &[f64], cov: &[Vec<f64>]) -> Result<Self> {
        Self::new(DVector::from_column_slice(mean), SymMatrix::from_rows(cov)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.cov.dim() {
            return Err(Error::DimMismatch { expected: self.cov.dim(), found: self.mean.len() });
        }
        if self.mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let lmin = sym_eig(&self.cov)?.min();
        if lmin < -self.cov.psd_tolerance() {
            return Err(Error::NotPsd { min_eig: lmin });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Second-moment matrix `Σ + μμᵀ`.
    pub fn second_moment(&self) -> SymMatrix {
        self.cov.add(&SymMatrix::outer(&self.mean))
    }
}

/// Affine map `ξ ↦ Aξ + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub a: SymMatrix,
    #[serde(with = "dvec_serde")]
    pub b: DVector<f64>,
}

impl AffineMap {
    pub fn identity(n: usize) -> Self {
        AffineMap { a: SymMatrix::identity(n), b: DVector::zeros(n) }
    }

    /// Moments of the image of `p` under the map.
    pub fn push(&self, p: &MomentPair) -> MomentPair {
        MomentPair { mean: self.a.as_matrix() * &p.mean + &self.b, cov: p.cov.congruence(self.a.as_matrix()) }
    }
}

/// Ball of mean-covariance pairs around a nominal pair; `weight` switches to the Mahalanobis
/// variant of the distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GelbrichBall {
    pub center: MomentPair,
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<SymMatrix>,
}

impl GelbrichBall {
    pub fn new(center: MomentPair, radius: f64) -> Result<Self> {
        let b = GelbrichBall { center, radius, weight: None };
        b.validate()?;
        Ok(b)
    }

    pub fn with_weight(mut self, h: SymMatrix) -> Result<Self> {
        self.weight = Some(h);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.center.validate()?;
        if !(self.radius >= 0.0) || !self.radius.is_finite() {
            return Err(Error::InvalidInput(format!("radius must be finite and nonnegative, got {}", self.radius)));
        }
        if let Some(h) = &self.weight {
            if h.dim() != self.dim() {
                return Err(Error::DimMismatch { expected: self.dim(), found: h.dim() });
            }
            let lmin = sym_eig(h)?.min();
            if lmin <= 0.0 {
                return Err(Error::NotPd { min_eig: lmin });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.center.mean
    }

    pub fn cov(&self) -> &SymMatrix {
        &self.center.cov
    }
}

fn check_pair(p1: &MomentPair, p2: &MomentPair) -> Result<()> {
    p1.validate()?;
    p2.validate()?;
    if p1.dim() != p2.dim() {
        return Err(Error::DimMismatch { expected: p1.dim(), found: p2.dim() });
    }
    Ok(())
}

/// Total order on pairs so that the distance is evaluated identically in both argument orders.
fn canonical_order<'a>(p1: &'a MomentPair, p2: &'a MomentPair) -> (&'a MomentPair, &'a MomentPair) {
    let key = |p: &'a MomentPair| p.mean.iter().chain(p.cov.as_matrix().iter());
    match key(p1).zip(key(p2)).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne()) {
        Some(std::cmp::Ordering::Greater) => (p2, p1),
        _ => (p1, p2),
    }
}

/// `min_R ‖X1 − X2 R‖²_F` over orthogonal `R`, i.e. `‖X1‖² + ‖X2‖² − 2‖X1ᵀX2‖_*`, evaluated as the
/// norm of an explicit difference so that nearby pairs do not suffer cancellation.
fn procrustes_residual(x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<f64> {
    let svd = (x1.transpose() * x2).svd(true, true);
    let (u, v_t) = svd.u.zip(svd.v_t).ok_or_else(|| Error::InvalidInput("SVD failed".into()))?;
    let r = v_t.transpose() * u.transpose();
    Ok((x1 - x2 * r).norm_squared())
}

fn squared(p1: &MomentPair, p2: &MomentPair, h: Option<&SymMatrix>) -> Result<f64> {
    check_pair(p1, p2)?;
    if p1 == p2 {
        return Ok(0.0);
    }
    let (p1, p2) = canonical_order(p1, p2);
    let d = &p1.mean - &p2.mean;
    let (s1_half, s2_half) = (sqrtm(&p1.cov)?.into_matrix(), sqrtm(&p2.cov)?.into_matrix());
    Ok(match h {
        None => d.norm_squared() + procrustes_residual(&s1_half, &s2_half)?,
        Some(h) => {
            let h_half = sqrtm(h)?.into_matrix();
            h.quad_form(&d) + procrustes_residual(&(&h_half * s1_half), &(&h_half * s2_half))?
        }
    })
}

/// Squared Gelbrich distance.
pub fn gelbrich_distance_sq(p1: &MomentPair, p2: &MomentPair) -> Result<f64> {
    squared(p1, p2, None)
}

pub fn gelbrich_distance(p1: &MomentPair, p2: &MomentPair) -> Result<f64> {
    Ok(squared(p1, p2, None)?.sqrt())
}

/// Gelbrich distance with the mean term measured in `‖·‖_H` and the covariance term weighted by `H`.
pub fn gelbrich_distance_mahalanobis(p1: &MomentPair, p2: &MomentPair, h: &SymMatrix) -> Result<f64> {
    if h.dim() != p1.dim() {
        return Err(Error::DimMismatch { expected: p1.dim(), found: h.dim() });
    }
    let lmin = sym_eig(h)?.min();
    if lmin <= 0.0 {
        return Err(Error::NotPd { min_eig: lmin });
    }
    Ok(squared(p1, p2, Some(h))?.sqrt())
}

/// Affine map pushing any distribution with moments `p1` onto moments `p2`; optimal for
/// Gaussians. Requires `Σ1 ≻ 0`.
pub fn optimal_pushforward_map(p1: &MomentPair, p2: &MomentPair) -> Result<AffineMap> {
    check_pair(p1, p2)?;
    let eig = sym_eig(&p1.cov)?;
    let threshold = 1e-10 * p1.cov.max_abs();
    if eig.min() <= threshold {
        return Err(Error::SingularCov { min_eig: eig.min() });
    }
    let s1_half = eig.map(f64::sqrt);
    let s1_inv_half = inv_sqrtm_pd(&p1.cov, threshold)?;
    let middle = sqrtm(&p2.cov.congruence(s1_half.as_matrix()))?;
    let a = middle.congruence(s1_inv_half.as_matrix());
    let b = &p2.mean - a.as_matrix() * &p1.mean;
    Ok(AffineMap { a, b })
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Factor `L` with `L Lᵀ = Σ`: Cholesky when possible, otherwise `V diag(√λ⁺)`.
pub(crate) fn covariance_factor(cov: &SymMatrix) -> Result<DMatrix<f64>> {
    if let Some(ch) = cov.as_matrix().clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = sym_eig(cov)?;
    let mut l = eig.vectors.clone();
    for k in 0..l.ncols() {
        l.column_mut(k).scale_mut(eig.values[k].max(0.0).sqrt());
    }
    Ok(l)
}

/// Estimates `E‖f(ξ) − ξ‖²` for `ξ ~ N(μ1, Σ1)`. The mean shift `(A − I)μ1 + b` contributes
/// deterministically; only the centered part is sampled.
pub fn gaussian_coupling_cost(p1: &MomentPair, map: &AffineMap, samples: usize, seed: u64) -> Result<McEstimate> {
    p1.validate()?;
    if map.a.dim() != p1.dim() || map.b.len() != p1.dim() {
        return Err(Error::DimMismatch { expected: p1.dim(), found: map.a.dim() });
    }
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let n = p1.dim();
    let a_minus_i = map.a.as_matrix() - DMatrix::identity(n, n);
    let shift = (&a_minus_i * &p1.mean + &map.b).norm_squared();
    let k = &a_minus_i * covariance_factor(&p1.cov)?;
    if k.iter().all(|&x| x == 0.0) {
        return Ok(McEstimate { mean: shift, std_error: 0.0 });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = DVector::zeros(n);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let c = (&k * &z).norm_squared();
        sum += c;
        sum_sq += c * c;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = if samples > 1 { ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0) } else { 0.0 };
    Ok(McEstimate { mean: shift + mean, std_error: (var / m).sqrt() })
}

/// Largest dimension accepted by [`gelbrich_sq_sdp_oracle`].
pub const SDP_ORACLE_MAX_DIM: usize = 8;

/// Squared Gelbrich distance as the value of
/// `min ‖μ1−μ2‖² + Tr(Σ1 + Σ2 − 2C)  s.t. [Σ1 C; Cᵀ Σ2] ⪰ 0`, solved by ADMM.
pub fn gelbrich_sq_sdp_oracle(p1: &MomentPair, p2: &MomentPair, settings: &AdmmSettings) -> Result<f64> {
    check_pair(p1, p2)?;
    let n = p1.dim();
    if n > SDP_ORACLE_MAX_DIM {
        return Err(Error::TooLarge(format!("oracle dimension {n} exceeds {SDP_ORACLE_MAX_DIM}")));
    }
    let mut m = Model::new();
    let x = m.psd(2 * n);
    for j in 0..n {
        for i in 0..=j {
            m.eq(x.at(i, j), p1.cov.get(i, j));
            m.eq(x.at(n + i, n + j), p2.cov.get(i, j));
        }
    }
    let mut obj = LinExpr::constant((&p1.mean - &p2.mean).norm_squared() + p1.cov.trace() + p2.cov.trace());
    for i in 0..n {
        obj.add_scaled(&x.at(i, n + i), -2.0);
    }
    m.minimize(obj);
    let compiled = m.compile()?;
    let sol = admm_solve(&compiled.problem, settings)?;
    if !sol.is_optimal() {
        return Err(Error::SolverDidNotConverge { iterations: sol.iterations, residual: sol.primal_residual.max(sol.dual_residual) });
    }
    Ok(sol.primal_value)
}
