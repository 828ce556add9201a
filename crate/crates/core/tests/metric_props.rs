mod common;

use gelbrich_core::linalg::SymMatrix;
use gelbrich_core::metric::{
    gaussian_coupling_cost, gelbrich_distance, gelbrich_distance_mahalanobis, gelbrich_distance_sq,
    optimal_pushforward_map, AffineMap, MomentPair,
};
use nalgebra::DVector;
use proptest::prelude::*;

fn triple(n: usize) -> impl Strategy<Value = (MomentPair, MomentPair, MomentPair)> {
    (common::pair(n, 0.0), common::pair(n, 0.0), common::pair(n, 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metric_axioms((x, y, z) in (1usize..=6).prop_flat_map(triple)) {
        let xy = gelbrich_distance(&x, &y).unwrap();
        prop_assert_eq!(xy, gelbrich_distance(&y, &x).unwrap());
        prop_assert!(xy >= 0.0);
        let xz = gelbrich_distance(&x, &z).unwrap();
        let yz = gelbrich_distance(&y, &z).unwrap();
        prop_assert!(xz <= xy + yz + 1e-8);
        prop_assert!(gelbrich_distance(&x, &x).unwrap() <= 1e-7);
    }

    #[test]
    fn small_distance_iff_close_moments((x, dm, dc) in (1usize..=6).prop_flat_map(|n| (common::pair(n, 0.1), common::vector(n), common::sym(n))), eps in prop_oneof![Just(0.0), Just(1e-9), Just(1e-3)]) {
        let y = MomentPair::new(&x.mean + dm * eps, x.cov.add(&dc.scale(eps * 1e-2))).unwrap();
        let g = gelbrich_distance(&x, &y).unwrap();
        let diff = (&x.mean - &y.mean).norm() + x.cov.sub(&y.cov).frobenius();
        prop_assert_eq!(g <= 1e-7, diff <= 1e-6, "g = {}, diff = {}", g, diff);
    }

    #[test]
    fn mahalanobis_identity_weight((x, y) in (1usize..=5).prop_flat_map(|n| (common::pair(n, 0.0), common::pair(n, 0.0)))) {
        let h = SymMatrix::identity(x.dim());
        let plain = gelbrich_distance(&x, &y).unwrap();
        prop_assert!((gelbrich_distance_mahalanobis(&x, &y, &h).unwrap() - plain).abs() <= 1e-12 * (1.0 + plain));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_affine_map_costs_at_least_the_bound((x, a, b) in (1usize..=3).prop_flat_map(|n| (common::pair(n, 0.1), common::sym(n), common::vector(n))), seed in any::<u64>()) {
        let map = AffineMap { a: a.add(&SymMatrix::identity(x.dim())), b };
        let y = map.push(&x);
        let est = gaussian_coupling_cost(&x, &map, 20_000, seed).unwrap();
        let g2 = gelbrich_distance_sq(&x, &y).unwrap();
        prop_assert!(est.mean >= g2 - 3.0 * est.std_error - 1e-12, "cost {:?} vs G² {}", est, g2);
    }

    #[test]
    fn optimal_map_attains_the_bound((x, y) in (1usize..=3).prop_flat_map(|n| (common::pair(n, 0.1), common::pair(n, 0.0))), seed in any::<u64>()) {
        let map = optimal_pushforward_map(&x, &y).unwrap();
        let est = gaussian_coupling_cost(&x, &map, 20_000, seed).unwrap();
        let g2 = gelbrich_distance_sq(&x, &y).unwrap();
        prop_assert!((est.mean - g2).abs() <= 3.0 * est.std_error + 1e-9 * (1.0 + g2), "cost {:?} vs G² {}", est, g2);
    }
}

#[test]
fn scalar_distance_is_euclidean_in_mean_and_std() {
    let x = MomentPair::new(DVector::from_vec(vec![1.0]), SymMatrix::from_diagonal(&[4.0])).unwrap();
    let y = MomentPair::new(DVector::from_vec(vec![-2.0]), SymMatrix::from_diagonal(&[9.0])).unwrap();
    assert!((gelbrich_distance(&x, &y).unwrap() - (9.0f64 + 1.0).sqrt()).abs() < 1e-12);
}
