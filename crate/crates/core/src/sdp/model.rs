//! A thin modeling layer that compiles affine expressions, LMIs and sign constraints into a
//! standard-form [`SdpProblem`].
//!
//! Nonnegative scalars share one diagonal block appended after all PSD blocks. Free scalars are
//! split into a difference of two nonnegatives, free symmetric matrices into a difference of two
//! PSD blocks, and every LMI `S(x) ⪰ 0` becomes a fresh PSD slack block tied to `S(x)` by
//! equality rows. Compilation order is the order of the modeling calls, so output is stable.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

use super::admm::SdpSolution;
use super::problem::{BlockSym, Entry, SdpProblem};
use crate::error::Result;
use crate::linalg::SymMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Coord {
    /// Upper-triangular coordinate `X_ij`, `i <= j`, of a PSD block.
    Mat { block: usize, i: usize, j: usize },
    /// Entry of the shared nonnegative block.
    Scalar(usize),
}

/// Affine function of the model's cone coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    terms: BTreeMap<Coord, f64>,
    constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        LinExpr::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { terms: BTreeMap::new(), constant: c }
    }

    fn coord(c: Coord) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(c, 1.0);
        LinExpr { terms, constant: 0.0 }
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    pub fn scaled(&self, c: f64) -> Self {
        if c == 0.0 {
            return LinExpr::zero();
        }
        LinExpr { terms: self.terms.iter().map(|(k, v)| (*k, v * c)).collect(), constant: self.constant * c }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, c: f64) {
        if c == 0.0 {
            return;
        }
        for (k, v) in &other.terms {
            *self.terms.entry(*k).or_insert(0.0) += c * v;
        }
        self.constant += c * other.constant;
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    /// `Σ c_k e_k`.
    pub fn combination<'a>(items: impl IntoIterator<Item = (f64, &'a LinExpr)>) -> Self {
        let mut out = LinExpr::zero();
        for (c, e) in items {
            out.add_scaled(e, c);
        }
        out
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self.add_scaled(&rhs, 1.0);
        self
    }
}

impl Add<&LinExpr> for &LinExpr {
    type Output = LinExpr;
    fn add(self, rhs: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        out.add_scaled(rhs, 1.0);
        out
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: LinExpr) -> LinExpr {
        self.add_scaled(&rhs, -1.0);
        self
    }
}

impl Sub<&LinExpr> for &LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        out.add_scaled(rhs, -1.0);
        out
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

impl Mul<&LinExpr> for f64 {
    type Output = LinExpr;
    fn mul(self, rhs: &LinExpr) -> LinExpr {
        rhs.scaled(self)
    }
}

impl Mul<LinExpr> for f64 {
    type Output = LinExpr;
    fn mul(self, rhs: LinExpr) -> LinExpr {
        rhs.scaled(self)
    }
}

/// Symmetric matrix of affine expressions; only the upper triangle is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SymExpr {
    dim: usize,
    upper: Vec<LinExpr>,
}

impl SymExpr {
    pub fn zeros(dim: usize) -> Self {
        SymExpr { dim, upper: vec![LinExpr::zero(); dim * (dim + 1) / 2] }
    }

    pub fn from_constant(m: &SymMatrix) -> Self {
        let mut s = SymExpr::zeros(m.dim());
        for j in 0..m.dim() {
            for i in 0..=j {
                s.set(i, j, LinExpr::constant(m.get(i, j)));
            }
        }
        s
    }

    /// `e · I`.
    pub fn scalar_identity(dim: usize, e: &LinExpr) -> Self {
        let mut s = SymExpr::zeros(dim);
        for i in 0..dim {
            s.set(i, i, e.clone());
        }
        s
    }

    /// `e · M` for a constant symmetric `M`.
    pub fn scalar_times(e: &LinExpr, m: &SymMatrix) -> Self {
        let mut s = SymExpr::zeros(m.dim());
        for j in 0..m.dim() {
            for i in 0..=j {
                s.set(i, j, e.scaled(m.get(i, j)));
            }
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn idx(i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        j * (j + 1) / 2 + i
    }

    pub fn get(&self, i: usize, j: usize) -> &LinExpr {
        &self.upper[Self::idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, e: LinExpr) {
        self.upper[Self::idx(i, j)] = e;
    }

    pub fn plus(&self, other: &SymExpr) -> SymExpr {
        assert_eq!(self.dim, other.dim);
        SymExpr { dim: self.dim, upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a + b).collect() }
    }

    pub fn minus(&self, other: &SymExpr) -> SymExpr {
        assert_eq!(self.dim, other.dim);
        SymExpr { dim: self.dim, upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a - b).collect() }
    }

    /// `⟨M, S⟩` for a constant symmetric `M`.
    pub fn inner(&self, m: &SymMatrix) -> LinExpr {
        let mut out = LinExpr::zero();
        for j in 0..self.dim {
            for i in 0..=j {
                let c = if i == j { m.get(i, i) } else { 2.0 * m.get(i, j) };
                out.add_scaled(self.get(i, j), c);
            }
        }
        out
    }

    pub fn trace(&self) -> LinExpr {
        LinExpr::combination((0..self.dim).map(|i| (1.0, self.get(i, i))))
    }

    /// Block matrix `[a, b; bᵀ, c]` where `b` is given column by column (`a.dim × c.dim`).
    pub fn block2(a: &SymExpr, b: &[Vec<LinExpr>], c: &SymExpr) -> SymExpr {
        let (n, m) = (a.dim, c.dim);
        let mut s = SymExpr::zeros(n + m);
        for j in 0..n {
            for i in 0..=j {
                s.set(i, j, a.get(i, j).clone());
            }
        }
        for j in 0..m {
            for i in 0..=j {
                s.set(n + i, n + j, c.get(i, j).clone());
            }
        }
        assert_eq!(b.len(), m);
        for (col, bj) in b.iter().enumerate() {
            assert_eq!(bj.len(), n);
            for (row, e) in bj.iter().enumerate() {
                s.set(row, n + col, e.clone());
            }
        }
        s
    }

    /// Arrow matrix `[t I, u; uᵀ, t]`, PSD exactly when `‖u‖ ≤ t`.
    pub fn arrow(t: &LinExpr, u: &[LinExpr]) -> SymExpr {
        let k = u.len();
        SymExpr::block2(&SymExpr::scalar_identity(k, t), &[u.to_vec()], &SymExpr::scalar_identity(1, t))
    }
}

/// Handle to a PSD block variable.
#[derive(Debug, Clone, Copy)]
pub struct MatVar {
    block: usize,
    dim: usize,
}

impl MatVar {
    pub fn at(&self, i: usize, j: usize) -> LinExpr {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        LinExpr::coord(Coord::Mat { block: self.block, i, j })
    }

    pub fn expr(&self) -> SymExpr {
        let mut s = SymExpr::zeros(self.dim);
        for j in 0..self.dim {
            for i in 0..=j {
                s.set(i, j, self.at(i, j));
            }
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Debug, Clone, Default)]
pub struct Model {
    psd_dims: Vec<usize>,
    scalars: usize,
    equalities: Vec<(LinExpr, f64)>,
    objective: LinExpr,
}

/// Maps model coordinates onto the blocks of the compiled problem.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub problem: SdpProblem,
    lp_block: Option<usize>,
}

impl Model {
    pub fn new() -> Self {
        Model::default()
    }

    pub fn psd(&mut self, dim: usize) -> MatVar {
        assert!(dim > 0);
        self.psd_dims.push(dim);
        MatVar { block: self.psd_dims.len() - 1, dim }
    }

    pub fn nonneg(&mut self) -> LinExpr {
        self.scalars += 1;
        LinExpr::coord(Coord::Scalar(self.scalars - 1))
    }

    pub fn free(&mut self) -> LinExpr {
        let p = self.nonneg();
        let n = self.nonneg();
        p - n
    }

    pub fn free_vec(&mut self, n: usize) -> Vec<LinExpr> {
        (0..n).map(|_| self.free()).collect()
    }

    pub fn free_sym(&mut self, dim: usize) -> SymExpr {
        let p = self.psd(dim);
        let n = self.psd(dim);
        p.expr().minus(&n.expr())
    }

    /// `lhs == rhs`.
    pub fn eq(&mut self, lhs: LinExpr, rhs: f64) {
        self.equalities.push((lhs, rhs));
    }

    /// `lhs <= rhs`, via a nonnegative slack.
    pub fn le(&mut self, lhs: LinExpr, rhs: f64) {
        let s = self.nonneg();
        self.eq(lhs + s, rhs);
    }

    /// `lhs >= rhs`.
    pub fn ge(&mut self, lhs: LinExpr, rhs: f64) {
        let s = self.nonneg();
        self.eq(lhs - s, rhs);
    }

    /// `s ⪰ 0`.
    pub fn lmi(&mut self, s: &SymExpr) {
        if s.dim == 1 {
            self.ge(s.get(0, 0).clone(), 0.0);
            return;
        }
        let slack = self.psd(s.dim);
        for j in 0..s.dim {
            for i in 0..=j {
                let e = s.get(i, j) - &slack.at(i, j);
                let c = e.constant;
                let mut e = e;
                e.constant = 0.0;
                self.eq(e, -c);
            }
        }
    }

    /// New PSD block `[a, b; bᵀ, C]` with `a` and `b` pinned by equalities; returns the free corner `C`
    /// of dimension `corner`. Cheaper than [`Model::lmi`] when `C` would otherwise be a separate variable.
    pub fn lmi_with_corner(&mut self, a: &SymExpr, b: &[Vec<LinExpr>], corner: usize) -> SymExpr {
        let n = a.dim();
        let w = self.psd(n + corner);
        for j in 0..n {
            for i in 0..=j {
                self.eq(w.at(i, j) - a.get(i, j).clone(), 0.0);
            }
        }
        assert_eq!(b.len(), corner);
        for (col, bj) in b.iter().enumerate() {
            assert_eq!(bj.len(), n);
            for (row, e) in bj.iter().enumerate() {
                self.eq(w.at(row, n + col) - e.clone(), 0.0);
            }
        }
        let mut c = SymExpr::zeros(corner);
        for j in 0..corner {
            for i in 0..=j {
                c.set(i, j, w.at(n + i, n + j));
            }
        }
        c
    }

    pub fn minimize(&mut self, objective: LinExpr) {
        self.objective = objective;
    }

    fn lp_block(&self) -> Option<usize> {
        (self.scalars > 0).then_some(self.psd_dims.len())
    }

    fn to_block_sym(&self, e: &LinExpr) -> BlockSym {
        let lp = self.lp_block();
        BlockSym::from_entries(e.terms.iter().filter(|(_, v)| **v != 0.0).map(|(c, &v)| match *c {
            Coord::Mat { block, i, j } => Entry { block, i, j, value: if i == j { v } else { 0.5 * v } },
            Coord::Scalar(k) => Entry { block: lp.expect("scalar without LP block"), i: k, j: k, value: v },
        }))
    }

    pub fn compile(&self) -> Result<Compiled> {
        let mut blocks: Vec<i64> = self.psd_dims.iter().map(|&d| d as i64).collect();
        if self.scalars > 0 {
            blocks.push(-(self.scalars as i64));
        }
        let cost = self.to_block_sym(&self.objective);
        let mut constraints = Vec::with_capacity(self.equalities.len());
        let mut rhs = Vec::with_capacity(self.equalities.len());
        for (e, b) in &self.equalities {
            let a = self.to_block_sym(e);
            let b = b - e.constant;
            if a.is_empty() && b == 0.0 {
                continue;
            }
            constraints.push(a);
            rhs.push(b);
        }
        let problem = SdpProblem::new(blocks, cost, constraints, rhs)?.with_offset(self.objective.constant);
        Ok(Compiled { problem, lp_block: self.lp_block() })
    }
}

impl Compiled {
    /// Value of a model expression at a solver iterate.
    pub fn value(&self, sol: &SdpSolution, e: &LinExpr) -> f64 {
        let mut v = e.constant;
        for (c, k) in &e.terms {
            let x = match *c {
                Coord::Mat { block, i, j } => sol.x[block][(i, j)],
                Coord::Scalar(s) => sol.x[self.lp_block.expect("scalar without LP block")][(s, s)],
            };
            v += k * x;
        }
        v
    }

    pub fn sym_value(&self, sol: &SdpSolution, s: &SymExpr) -> DMatrix<f64> {
        DMatrix::from_fn(s.dim, s.dim, |i, j| self.value(sol, s.get(i, j)))
    }
}
