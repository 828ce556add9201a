mod common;

use gelbrich_core::linalg::SymMatrix;
use gelbrich_core::linear_risk::{gelbrich_risk_linear, worst_case_moments_linear};
use gelbrich_core::metric::{gelbrich_distance, GelbrichBall, MomentPair};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn chebyshev(p: &MomentPair, w: &DVector<f64>, alpha: f64) -> f64 {
    -p.mean.dot(w) + alpha * p.cov.quad_form(w).max(0.0).sqrt()
}

fn with_radius(ball: &GelbrichBall, radius: f64) -> GelbrichBall {
    GelbrichBall::new(ball.center.clone(), radius).unwrap()
}

proptest! {
    #[test]
    fn nondecreasing_in_radius_and_coefficient((ball, w) in (1usize..=4).prop_flat_map(|n| (common::ball(n, 2.0), common::vector(n)))) {
        let mut last = f64::NEG_INFINITY;
        for k in 0..10 {
            let v = gelbrich_risk_linear(&with_radius(&ball, 0.2 * k as f64), &w, 1.0).unwrap().value;
            prop_assert!(v >= last - 1e-12);
            last = v;
        }
        let mut last = f64::NEG_INFINITY;
        for k in 0..10 {
            let v = gelbrich_risk_linear(&ball, &w, 0.5 * k as f64).unwrap().value;
            prop_assert!(v >= last - 1e-12);
            last = v;
        }
    }

    #[test]
    fn positively_homogeneous_in_portfolio((ball, w) in (1usize..=4).prop_flat_map(|n| (common::ball(n, 2.0), common::vector(n))), c in 0.01..100.0f64, alpha in 0.0..5.0f64) {
        let v = gelbrich_risk_linear(&ball, &w, alpha).unwrap().value;
        let vc = gelbrich_risk_linear(&ball, &(&w * c), alpha).unwrap().value;
        prop_assert!((vc - c * v).abs() <= 1e-10 * (1.0 + c * v.abs()));
    }

    #[test]
    fn scaled_identity_weight_rescales_robustness((ball, w) in (1usize..=4).prop_flat_map(|n| (common::ball(n, 2.0), common::vector(n))), c in 0.1..10.0f64, alpha in 0.0..5.0f64) {
        let plain = gelbrich_risk_linear(&ball, &w, alpha).unwrap();
        let weighted = gelbrich_risk_linear(&ball.clone().with_weight(SymMatrix::identity(ball.dim()).scale(c)).unwrap(), &w, alpha).unwrap();
        prop_assert_eq!(weighted.nominal, plain.nominal);
        prop_assert_eq!(weighted.deviation, plain.deviation);
        prop_assert!((weighted.robustness - plain.robustness / c.sqrt()).abs() <= 1e-12 * (1.0 + plain.robustness));
    }

    #[test]
    fn sampled_ball_points_never_exceed_closed_form((ball, w) in (1usize..=4).prop_flat_map(|n| (common::ball(n, 1.0), common::vector(n))), alpha in 0.0..5.0f64, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let value = gelbrich_risk_linear(&ball, &w, alpha).unwrap().value;
        for _ in 0..100 {
            let p = common::sample_in_ball(&mut rng, &ball);
            prop_assert!(chebyshev(&p, &w, alpha) <= value + 1e-9);
        }
    }
}

#[test]
fn extremal_pair_attains_and_sampling_approaches() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let ball = GelbrichBall::new(common::random_pair(&mut rng, 3, 0.1), 0.5).unwrap();
        let w = common::random_vector(&mut rng, 3);
        let value = gelbrich_risk_linear(&ball, &w, 1.5).unwrap().value;
        let star = worst_case_moments_linear(&ball, &w, 1.5).unwrap();
        assert!((chebyshev(&star, &w, 1.5) - value).abs() <= 1e-8);
        assert!((gelbrich_distance(&star, &ball.center).unwrap() - 0.5).abs() <= 1e-7);
        let mut running = f64::NEG_INFINITY;
        let mut gaps = Vec::new();
        for k in 1..=2000 {
            running = running.max(chebyshev(&common::sample_in_ball(&mut rng, &ball), &w, 1.5));
            assert!(running <= value + 1e-9);
            if k == 10 || k == 2000 {
                gaps.push(value - running);
            }
        }
        assert!(gaps[1] <= gaps[0] && gaps[1] < 0.5 * value.abs().max(1.0), "gaps {gaps:?}");
    }
}

/// Scalar ball: `(μ − μ̂)² + (σ − σ̂)² ≤ ρ²`, so the two-layer supremum is a maximum over a disc.
#[test]
fn two_layer_grid_matches_closed_form_in_one_dimension() {
    for (mu, sigma, rho, w, alpha) in [(0.1, 0.5, 0.3, 1.0, 1.0), (-0.2, 1.0, 0.8, -2.0, 3.0), (0.0, 0.2, 0.1, 0.5, 0.0)] {
        let ball = GelbrichBall::new(MomentPair::from_slices(&[mu], &[vec![sigma * sigma]]).unwrap(), rho).unwrap();
        let value = gelbrich_risk_linear(&ball, &DVector::from_vec(vec![w]), alpha).unwrap().value;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=200 {
            for j in 0..=720 {
                let r = rho * i as f64 / 200.0;
                let t = std::f64::consts::TAU * j as f64 / 720.0;
                let (m, s) = (mu + r * t.cos(), sigma + r * t.sin());
                if s >= 0.0 {
                    best = best.max(-m * w + alpha * s * w.abs());
                }
            }
        }
        assert!(best <= value + 1e-12 && value - best <= 1e-4 * (1.0 + value.abs()), "{best} vs {value}");
    }
}
