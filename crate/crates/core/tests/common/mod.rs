#![allow(dead_code)]

use gelbrich_core::linalg::SymMatrix;
use gelbrich_core::metric::{GelbrichBall, MomentPair};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

/// `LLᵀ + floor·I` from `n²` entries of `L`.
pub fn spd_from(entries: &[f64], n: usize, floor: f64) -> SymMatrix {
    let l = DMatrix::from_column_slice(n, n, &entries[..n * n]);
    SymMatrix::new(&l * l.transpose() + DMatrix::identity(n, n) * floor)
}

pub fn pair_from(entries: &[f64], n: usize, floor: f64) -> MomentPair {
    let mean = DVector::from_column_slice(&entries[n * n..n * n + n]);
    MomentPair::new(mean, spd_from(entries, n, floor)).unwrap()
}

/// Random moment pair of dimension `n` with covariance eigenvalues at least `floor`.
pub fn pair(n: usize, floor: f64) -> impl Strategy<Value = MomentPair> {
    prop::collection::vec(-1.0..1.0f64, n * n + n).prop_map(move |v| pair_from(&v, n, floor))
}

pub fn ball(n: usize, max_radius: f64) -> impl Strategy<Value = GelbrichBall> {
    (pair(n, 0.05), 0.0..max_radius).prop_map(|(c, r)| GelbrichBall::new(c, r).unwrap())
}

pub fn vector(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-1.0..1.0f64, n).prop_map(DVector::from_vec)
}

pub fn sym(n: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-1.0..1.0f64, n * n).prop_map(move |v| {
        let a = DMatrix::from_column_slice(n, n, &v);
        SymMatrix::new((&a + a.transpose()) * 0.5)
    })
}

pub fn random_pair(rng: &mut impl Rng, n: usize, floor: f64) -> MomentPair {
    let v: Vec<f64> = (0..n * n + n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    pair_from(&v, n, floor)
}

pub fn random_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Uniform draw from the simplex.
pub fn random_simplex(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    let e = DVector::from_fn(n, |_, _| -rng.gen_range(1e-12..1.0f64).ln());
    &e / e.sum()
}

/// Random pair inside the ball: random mean shift and covariance congruence at a random scale,
/// rejected until the pair lands in the ball.
pub fn sample_in_ball(rng: &mut impl Rng, ball: &GelbrichBall) -> MomentPair {
    use gelbrich_core::metric::gelbrich_distance;
    let n = ball.dim();
    loop {
        let s = ball.radius * rng.gen_range(0.0..1.0f64);
        let dm = random_vector(rng, n) * s;
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)) * (s / (n as f64).sqrt());
        let l = DMatrix::identity(n, n) + &b;
        let cov = ball.cov().congruence(&l);
        let cand = MomentPair::new(ball.mean() + dm, cov).unwrap();
        if gelbrich_distance(&cand, &ball.center).unwrap() <= ball.radius {
            return cand;
        }
    }
}
