//! Dense symmetric linear algebra: a symmetric matrix newtype, a cyclic Jacobi
//! eigensolver, PSD square roots and projection onto the PSD cone.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative off-diagonal threshold at which Jacobi sweeps stop.
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Default relative tolerance below zero that still counts as PSD.
pub const PSD_REL_TOL: f64 = 1e-8;

/// Real symmetric matrix. Entries are symmetrized as `(A + Aᵀ)/2` on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Symmetrizes a square matrix. Panics if `m` is not square or is empty.
    pub fn new(m: DMatrix<f64>) -> Self {
        assert!(m.is_square() && m.nrows() > 0, "SymMatrix needs a non-empty square matrix");
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        for r in rows {
            if r.len() != n {
                return Err(Error::DimMismatch { expected: n, found: r.len() });
            }
        }
        Ok(Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j])))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// `v vᵀ`
    pub fn outer(v: &DVector<f64>) -> Self {
        SymMatrix::new(v * v.transpose())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn scale(&self, c: f64) -> Self {
        SymMatrix(&self.0 * c)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 - &other.0)
    }

    /// Congruence `B A Bᵀ`, re-symmetrized.
    pub fn congruence(&self, b: &DMatrix<f64>) -> Self {
        SymMatrix::new(b * &self.0 * b.transpose())
    }

    /// Quadratic form `vᵀ A v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.0 * v))
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.0.row(i).iter().copied().collect()).collect()
    }

    /// Negative-eigenvalue slack accepted for PSD checks.
    pub fn psd_tolerance(&self) -> f64 {
        PSD_REL_TOL * self.max_abs().max(1.0)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.to_rows()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SymMatrix::from_rows(&rows)
    }
}

/// Eigendecomposition `A = V diag(values) Vᵀ` with values in nondecreasing order.
#[derive(Debug, Clone)]
pub struct EigenDecomp {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomp {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Applies `f` to the spectrum: `V diag(f(λ)) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let fk = f(self.values[k]);
            scaled.column_mut(k).scale_mut(fk);
        }
        SymMatrix::new(scaled * self.vectors.transpose())
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map(|x| x)
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn sym_eig(a: &SymMatrix) -> Result<EigenDecomp> {
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = a.dim();
    let mut m = a.as_matrix().clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let threshold = JACOBI_TOL * a.frobenius();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= threshold || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| m[(k, k)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    Ok(EigenDecomp { values, vectors })
}

/// Principal square root of a PSD matrix; eigenvalues in `[-tol, 0)` are clipped to zero.
pub fn sqrtm_psd(a: &SymMatrix, tol: f64) -> Result<SymMatrix> {
    let eig = sym_eig(a)?;
    if eig.min() < -tol {
        return Err(Error::NotPsd { min_eig: eig.min() });
    }
    Ok(eig.map(|x| x.max(0.0).sqrt()))
}

/// [`sqrtm_psd`] with the default relative tolerance.
pub fn sqrtm(a: &SymMatrix) -> Result<SymMatrix> {
    sqrtm_psd(a, a.psd_tolerance())
}

/// Frobenius-nearest PSD matrix (negative eigenvalues clipped).
pub fn psd_project(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eig(a)?;
    if eig.min() >= 0.0 {
        return Ok(a.clone());
    }
    Ok(eig.map(|x| x.max(0.0)))
}

/// Inverse square root of a positive definite matrix.
pub fn inv_sqrtm_pd(a: &SymMatrix, min_eig: f64) -> Result<SymMatrix> {
    let eig = sym_eig(a)?;
    if eig.min() <= min_eig {
        return Err(Error::NotPd { min_eig: eig.min() });
    }
    Ok(eig.map(|x| 1.0 / x.sqrt()))
}

pub fn min_eigenvalue(a: &SymMatrix) -> Result<f64> {
    Ok(sym_eig(a)?.min())
}

pub fn max_eigenvalue(a: &SymMatrix) -> Result<f64> {
    Ok(sym_eig(a)?.max())
}

/// Checks the PSD property up to the default tolerance.
pub fn ensure_psd(a: &SymMatrix) -> Result<()> {
    let lmin = min_eigenvalue(a)?;
    if lmin < -a.psd_tolerance() {
        return Err(Error::NotPsd { min_eig: lmin });
    }
    Ok(())
}
