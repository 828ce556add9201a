//! Moment estimators and finite-sample radius rules for sub-Gaussian data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, SymMatrix};
use crate::metric::MomentPair;

/// Constants of the concentration bounds behind [`subgaussian_radius`].
///
/// The second-moment constants `c1`, `c2`, `c3` are not pinned down numerically by the underlying
/// concentration result; the defaults are configuration, not ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationParams {
    /// Sub-Gaussian variance proxy `σ²`; `None` uses the spectral norm of the covariance.
    pub variance_proxy: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Constant of the mean bound; `None` uses `σ/√‖Σ‖`.
    pub mean_constant: Option<f64>,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        CalibrationParams { variance_proxy: None, c1: 1.0, c2: 2.0, c3: 0.25, mean_constant: None }
    }
}

impl CalibrationParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.c1) || !positive(self.c3) || !(self.c2 >= 1.0 && self.c2.is_finite()) {
            return Err(Error::InvalidInput("constants must be positive with c2 >= 1".into()));
        }
        if self.variance_proxy.is_some_and(|s| !positive(s)) || self.mean_constant.is_some_and(|c| !positive(c)) {
            return Err(Error::InvalidInput("variance proxy and mean constant must be positive".into()));
        }
        Ok(())
    }
}

/// Sample mean and (1/N-normalized) sample covariance of the rows of `samples`.
pub fn empirical_moments(samples: &DMatrix<f64>) -> Result<MomentPair> {
    let (rows, n) = samples.shape();
    if rows < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: rows });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let inv = 1.0 / rows as f64;
    let mean = DVector::from_fn(n, |j, _| samples.column(j).sum() * inv);
    let mut centered = samples.clone();
    for mut r in centered.row_iter_mut() {
        r -= mean.transpose();
    }
    let cov = SymMatrix::new(centered.transpose() * &centered * inv);
    MomentPair::new(mean, cov)
}

/// `c1 ρμ + c2 ρμ² + c3 ρM` with `c1 = 1 + 2‖μ‖/λmin`, `c2 = 1/λmin`, `c3 = √n/λmin`.
pub fn radius_from_moment_bounds(rho_mu: f64, rho_m: f64, mu: &DVector<f64>, cov: &SymMatrix) -> Result<f64> {
    if !(rho_mu >= 0.0) || !(rho_m >= 0.0) {
        return Err(Error::InvalidInput("moment bounds must be nonnegative".into()));
    }
    if mu.len() != cov.dim() {
        return Err(Error::DimMismatch { expected: cov.dim(), found: mu.len() });
    }
    let lmin = sym_eig(cov)?.min();
    if lmin <= 0.0 {
        return Err(Error::SingularCov { min_eig: lmin });
    }
    let n = cov.dim() as f64;
    let c1 = 1.0 + 2.0 * mu.norm() / lmin;
    let c2 = 1.0 / lmin;
    let c3 = n.sqrt() / lmin;
    Ok(c1 * rho_mu + c2 * rho_mu * rho_mu + c3 * rho_m)
}

/// High-probability bound on `‖μ̂_N − μ‖`.
pub fn mean_deviation_bound(eta: f64, samples: usize, cov: &SymMatrix, mean_constant: f64) -> Result<f64> {
    check_eta(eta)?;
    let spectral = sym_eig(cov)?.max().max(0.0);
    let n = samples as f64;
    Ok(mean_constant * ((cov.trace() / n).sqrt() + (2.0 * spectral * (1.0 / eta).ln() / n).sqrt()))
}

/// High-probability bound on `‖M̂_N − M‖` (spectral norm).
pub fn second_moment_deviation_bound(eta: f64, samples: usize, dim: usize, sigma_sq: f64, params: &CalibrationParams) -> Result<f64> {
    check_eta(eta)?;
    let (n, d) = (samples as f64, dim as f64);
    let l = (params.c2 / eta).ln() / (params.c3 * n);
    Ok(sigma_sq * params.c1 * ((d / n).sqrt() + d / n) + sigma_sq * (l.sqrt() + l))
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(Error::BadEta(eta))
    }
}

/// Radius of a Gelbrich ball containing the true moments with probability at least `1 − η`,
/// with the significance split evenly between the mean and second-moment bounds.
pub fn subgaussian_radius(eta: f64, samples: usize, mu: &DVector<f64>, cov: &SymMatrix, params: &CalibrationParams) -> Result<f64> {
    check_eta(eta)?;
    params.validate()?;
    if samples == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let spectral = sym_eig(cov)?.max();
    let sigma_sq = params.variance_proxy.unwrap_or(spectral);
    let c = params.mean_constant.unwrap_or_else(|| (sigma_sq / spectral).sqrt());
    let half = eta / 2.0;
    let rho_mu = mean_deviation_bound(half, samples, cov, c)?;
    let rho_m = second_moment_deviation_bound(half, samples, cov.dim(), sigma_sq, params)?;
    radius_from_moment_bounds(rho_mu, rho_m, mu, cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::covariance_factor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_samples_have_zero_covariance() {
        let s = DMatrix::from_fn(5, 2, |_, j| [1.5, -2.0][j]);
        let p = empirical_moments(&s).unwrap();
        assert_eq!(p.mean.as_slice(), &[1.5, -2.0]);
        assert!(p.cov.max_abs() < 1e-15);
    }

    #[test]
    fn two_point_sample() {
        let s = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let p = empirical_moments(&s).unwrap();
        assert_eq!(p.mean[0], 0.0);
        assert_eq!(p.cov.get(0, 0), 1.0);
    }

    #[test]
    fn too_few_samples() {
        let s = DMatrix::from_column_slice(1, 1, &[1.0]);
        assert!(matches!(empirical_moments(&s), Err(Error::TooFewSamples { needed: 2, got: 1 })));
    }

    #[test]
    fn law_of_large_numbers() {
        let mu = DVector::from_column_slice(&[0.5, -1.0, 0.0]);
        let cov = SymMatrix::from_rows(&[vec![1.0, 0.3, 0.0], vec![0.3, 2.0, -0.4], vec![0.0, -0.4, 0.5]]).unwrap();
        let l = covariance_factor(&cov).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let mut s = DMatrix::zeros(n, 3);
        for i in 0..n {
            let z = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
            s.set_row(i, &(&mu + &l * z).transpose());
        }
        let p = empirical_moments(&s).unwrap();
        let tol = 5.0 / (n as f64).sqrt();
        assert!((&p.mean - &mu).amax() < tol);
        assert!((p.cov.as_matrix() - cov.as_matrix()).amax() < tol);
    }

    #[test]
    fn radius_composition() {
        let mu = DVector::zeros(1);
        let cov = SymMatrix::identity(1);
        assert_eq!(radius_from_moment_bounds(0.0, 0.0, &mu, &cov).unwrap(), 0.0);
        assert!((radius_from_moment_bounds(0.1, 0.2, &mu, &cov).unwrap() - 0.31).abs() < 1e-15);
        let base = radius_from_moment_bounds(0.1, 0.2, &mu, &cov).unwrap();
        let doubled = radius_from_moment_bounds(0.1, 0.4, &mu, &cov).unwrap();
        assert!((doubled - base - 0.2).abs() < 1e-15);
        assert!(matches!(
            radius_from_moment_bounds(0.1, 0.1, &mu, &SymMatrix::zeros(1)),
            Err(Error::SingularCov { .. })
        ));
    }

    #[test]
    fn subgaussian_radius_shape() {
        let mu = DVector::from_column_slice(&[0.1, 0.0, -0.1]);
        let cov = SymMatrix::from_diagonal(&[1.0, 0.5, 2.0]);
        let p = CalibrationParams::default();
        let r1 = subgaussian_radius(1.0, 100, &mu, &cov, &p).unwrap();
        assert!(r1.is_finite() && r1 > 0.0);

        let n = 40_000;
        let ratio = subgaussian_radius(0.1, n, &mu, &cov, &p).unwrap() / subgaussian_radius(0.1, 4 * n, &mu, &cov, &p).unwrap();
        assert!((1.8..=2.2).contains(&ratio), "{ratio}");

        let mut last = 0.0;
        for eta in [1.0, 0.5, 0.1, 0.01, 1e-4] {
            let r = subgaussian_radius(eta, 500, &mu, &cov, &p).unwrap();
            assert!(r > last);
            last = r;
        }
        assert!(matches!(subgaussian_radius(0.0, 10, &mu, &cov, &p), Err(Error::BadEta(_))));
        assert!(matches!(subgaussian_radius(1.5, 10, &mu, &cov, &p), Err(Error::BadEta(_))));
    }
}
