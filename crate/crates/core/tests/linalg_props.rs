mod common;

use gelbrich_core::linalg::{psd_project, sqrtm_psd, sym_eig, SymMatrix};
use proptest::prelude::*;

proptest! {
    #[test]
    fn sqrt_is_homogeneous((a, c) in (common::pair(4, 0.0), 0.1..10.0f64)) {
        let a = a.cov;
        let lhs = sqrtm_psd(&a.scale(c * c), 1e-8).unwrap();
        let rhs = sqrtm_psd(&a, 1e-8).unwrap().scale(c);
        prop_assert!(lhs.sub(&rhs).max_abs() <= 1e-9 * (1.0 + rhs.max_abs()));
    }

    #[test]
    fn projection_is_idempotent(a in common::sym(5)) {
        let once = psd_project(&a).unwrap();
        let twice = psd_project(&once).unwrap();
        prop_assert!(once.sub(&twice).max_abs() <= 1e-10);
    }

    #[test]
    fn two_by_two_eigenvalues_are_characteristic_roots(x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64) {
        let a = SymMatrix::from_rows(&[vec![x, y], vec![y, z]]).unwrap();
        let mid = 0.5 * (x + z);
        let rad = (0.25 * (x - z) * (x - z) + y * y).sqrt();
        let eig = sym_eig(&a).unwrap();
        let mut got: Vec<f64> = eig.values.iter().copied().collect();
        got.sort_by(f64::total_cmp);
        prop_assert!((got[0] - (mid - rad)).abs() <= 1e-10);
        prop_assert!((got[1] - (mid + rad)).abs() <= 1e-10);
    }
}
