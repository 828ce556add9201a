use gelbrich_core::coefficients::{
    distortion_alpha, spectral_alpha, standard_risk_coefficient, PiecewiseFn, RiskMeasure, StructuralClass,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CLASSES: [StructuralClass; 4] = [
    StructuralClass::AllL2,
    StructuralClass::Symmetric,
    StructuralClass::SymmetricLinearUnimodal,
    StructuralClass::Gaussian,
];

/// Upper-tail CVaR at level `beta` of a discrete loss.
fn empirical_cvar(atoms: &[(f64, f64)], beta: f64) -> f64 {
    let mut sorted = atoms.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut mass, mut acc) = (0.0, 0.0);
    for (x, p) in sorted {
        let take = p.min(beta - mass);
        if take <= 0.0 {
            break;
        }
        acc += take * x;
        mass += take;
    }
    acc / beta
}

/// Zero-mean, unit-variance distribution on `values` with probabilities `probs`.
fn standardize(values: &[f64], probs: &[f64]) -> Option<Vec<(f64, f64)>> {
    let mean: f64 = values.iter().zip(probs).map(|(x, p)| x * p).sum();
    let var: f64 = values.iter().zip(probs).map(|(x, p)| p * (x - mean).powi(2)).sum();
    (var > 1e-12).then(|| values.iter().zip(probs).map(|(x, p)| ((x - mean) / var.sqrt(), *p)).collect())
}

proptest! {
    #[test]
    fn var_and_cvar_coincide_for_all_l2(beta in 1e-4..1.0f64) {
        let var = standard_risk_coefficient(&RiskMeasure::VaR { beta }, StructuralClass::AllL2).unwrap();
        let cvar = standard_risk_coefficient(&RiskMeasure::CVaR { beta }, StructuralClass::AllL2).unwrap();
        prop_assert_eq!(var, cvar);
    }

    #[test]
    fn cvar_dominates_var(beta in 1e-4..0.9999f64) {
        for class in CLASSES {
            let var = standard_risk_coefficient(&RiskMeasure::VaR { beta }, class).unwrap();
            let cvar = standard_risk_coefficient(&RiskMeasure::CVaR { beta }, class).unwrap();
            prop_assert!(cvar >= var - 1e-12, "{class}: CVaR {cvar} < VaR {var} at {beta}");
        }
    }

    #[test]
    fn spectral_coefficient_of_cvar_spectrum(beta in 1e-3..1.0f64) {
        let spectral = spectral_alpha(&PiecewiseFn::cvar_spectrum(beta).unwrap()).unwrap();
        let direct = ((1.0 - beta) / beta).sqrt();
        prop_assert!((spectral - direct).abs() <= 1e-12 * (1.0 + direct));
    }

    #[test]
    fn convex_distortion_matches_its_spectrum(levels in prop::collection::vec(0.0..5.0f64, 1..6)) {
        // Nondecreasing step spectrum normalized to integrate to one.
        let mut levels = levels;
        levels.sort_by(f64::total_cmp);
        let k = levels.len();
        let total: f64 = levels.iter().sum::<f64>() / k as f64;
        prop_assume!(total > 1e-6);
        let points: Vec<(f64, f64)> = levels.iter().enumerate().map(|(i, v)| (i as f64 / k as f64, v / total)).collect();
        let mut points = points;
        points.push((1.0, levels[k - 1] / total));
        let psi = PiecewiseFn::step(points).unwrap();
        let h = psi.cumulative().unwrap();
        let a = spectral_alpha(&psi).unwrap();
        prop_assert!((distortion_alpha(&h).unwrap() - a).abs() <= 1e-10 * (1.0 + a));
    }

    #[test]
    fn random_standardized_distributions_stay_below_cvar_coefficient(
        beta in 0.01..0.99f64,
        values in prop::collection::vec(-10.0..10.0f64, 2..5),
        weights in prop::collection::vec(0.01..1.0f64, 5),
    ) {
        let w = &weights[..values.len()];
        let s: f64 = w.iter().sum();
        let probs: Vec<f64> = w.iter().map(|x| x / s).collect();
        prop_assume!(standardize(&values, &probs).is_some());
        let atoms = standardize(&values, &probs).unwrap();
        let alpha = standard_risk_coefficient(&RiskMeasure::CVaR { beta }, StructuralClass::AllL2).unwrap();
        prop_assert!(empirical_cvar(&atoms, beta) <= alpha + 1e-9);
    }
}

#[test]
fn branch_points_are_continuous() {
    let alpha = |r: fn(f64) -> RiskMeasure, beta: f64, class| standard_risk_coefficient(&r(beta), class).unwrap();
    let cvar = |b| RiskMeasure::CVaR { beta: b };
    let eps = 1e-13;
    for (b, class) in [
        (0.5, StructuralClass::Symmetric),
        (1.0 / 3.0, StructuralClass::SymmetricLinearUnimodal),
        (2.0 / 3.0, StructuralClass::SymmetricLinearUnimodal),
    ] {
        let (l, r) = (alpha(cvar, b - eps, class), alpha(cvar, b + eps, class));
        assert!((l - r).abs() <= 1e-11, "{class} at {b}: {l} vs {r}");
    }
}

#[test]
fn two_point_search_attains_cvar_coefficient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for beta in [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9] {
        let alpha = standard_risk_coefficient(&RiskMeasure::CVaR { beta }, StructuralClass::AllL2).unwrap();
        let mut best = f64::NEG_INFINITY;
        for _ in 0..20_000 {
            let p = 10f64.powf(rng.gen_range(-4.0..-1e-4));
            let atoms = [(((1.0 - p) / p).sqrt(), p), (-(p / (1.0 - p)).sqrt(), 1.0 - p)];
            let v = empirical_cvar(&atoms, beta);
            assert!(v <= alpha + 1e-9);
            best = best.max(v);
        }
        assert!(alpha - best <= 1e-2, "β = {beta}: best {best} vs α {alpha}");
    }
}
