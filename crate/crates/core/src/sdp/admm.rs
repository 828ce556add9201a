//! Small-scale ADMM solver for standard-form SDPs.
//!
//! The iterate is split into an affine copy `X` (satisfies `A x = b` exactly) and a cone copy
//! `Z` (blockwise PSD / nonnegative). The affine projection uses an orthonormal basis of the
//! constraint rows, computed once; the cone projection clips eigenvalues per block.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::problem::SdpProblem;
use crate::error::{Error, Result};
use crate::linalg::{sym_eig, SymMatrix};

const SQRT2: f64 = std::f64::consts::SQRT_2;
const OVER_RELAXATION: f64 = 1.6;
const ADAPT_EVERY: usize = 50;
const ADAPT_RATIO: f64 = 10.0;
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdmmSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Largest accepted sum of block dimensions.
    pub max_total_dim: usize,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        AdmmSettings { tol: 1e-6, max_iter: 50_000, max_total_dim: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    MaxIterations,
    InfeasibleSuspected,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// `⟨C, X⟩ + offset`.
    pub primal_value: f64,
    /// `bᵀy + offset`.
    pub dual_value: f64,
    /// One matrix per block; diagonal blocks are returned as diagonal matrices.
    pub x: Vec<DMatrix<f64>>,
    pub y: DVector<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

/// Coordinate layout of the scaled vectorization (`svec`) of a block-diagonal matrix.
struct Layout {
    /// Per block: offset into the flat vector and the block's kind/size.
    offsets: Vec<usize>,
    dims: Vec<usize>,
    lp: Vec<bool>,
    len: usize,
}

impl Layout {
    fn new(p: &SdpProblem) -> Self {
        let mut offsets = Vec::with_capacity(p.blocks.len());
        let mut dims = Vec::with_capacity(p.blocks.len());
        let mut lp = Vec::with_capacity(p.blocks.len());
        let mut len = 0;
        for b in 0..p.blocks.len() {
            let d = p.block_dim(b);
            offsets.push(len);
            dims.push(d);
            lp.push(p.is_lp_block(b));
            len += if p.is_lp_block(b) { d } else { d * (d + 1) / 2 };
        }
        Layout { offsets, dims, lp, len }
    }

    /// Index of `(i, j)`, `i <= j`, inside block `b`. Upper triangle stored column by column.
    fn index(&self, b: usize, i: usize, j: usize) -> usize {
        if self.lp[b] {
            self.offsets[b] + i
        } else {
            self.offsets[b] + j * (j + 1) / 2 + i
        }
    }

    fn to_dense_row(&self, m: &super::problem::BlockSym) -> Vec<f64> {
        let mut row = vec![0.0; self.len];
        for e in &m.entries {
            let k = self.index(e.block, e.i, e.j);
            row[k] += if e.i == e.j { e.value } else { SQRT2 * e.value };
        }
        row
    }

    fn unpack(&self, b: usize, x: &[f64]) -> DMatrix<f64> {
        let d = self.dims[b];
        let mut m = DMatrix::zeros(d, d);
        if self.lp[b] {
            for i in 0..d {
                m[(i, i)] = x[self.offsets[b] + i];
            }
        } else {
            for j in 0..d {
                for i in 0..=j {
                    let v = x[self.index(b, i, j)];
                    if i == j {
                        m[(i, i)] = v;
                    } else {
                        m[(i, j)] = v / SQRT2;
                        m[(j, i)] = v / SQRT2;
                    }
                }
            }
        }
        m
    }

    fn pack(&self, b: usize, m: &DMatrix<f64>, x: &mut [f64]) {
        let d = self.dims[b];
        for j in 0..d {
            for i in 0..=j {
                x[self.index(b, i, j)] = if i == j { m[(i, i)] } else { SQRT2 * 0.5 * (m[(i, j)] + m[(j, i)]) };
            }
        }
    }

    fn project_cone(&self, x: &mut [f64]) -> Result<()> {
        for b in 0..self.dims.len() {
            if self.lp[b] {
                let o = self.offsets[b];
                for v in &mut x[o..o + self.dims[b]] {
                    *v = v.max(0.0);
                }
            } else if self.dims[b] == 1 {
                let o = self.offsets[b];
                x[o] = x[o].max(0.0);
            } else {
                let m = SymMatrix::new(self.unpack(b, x));
                let eig = sym_eig(&m)?;
                if eig.min() < 0.0 {
                    let p = eig.map(|l| l.max(0.0));
                    self.pack(b, p.as_matrix(), x);
                }
            }
        }
        Ok(())
    }
}

/// Orthonormal basis of the constraint row space with the matching transformed right-hand side.
struct AffineSet {
    /// `rank × len`, orthonormal rows.
    q: Vec<Vec<f64>>,
    beta: Vec<f64>,
}

enum AffineBuild {
    Ok(AffineSet),
    Inconsistent(f64),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn build_affine(rows: &[Vec<f64>], rhs: &[f64]) -> AffineBuild {
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut worst = 0.0_f64;
    for (row, &b) in rows.iter().zip(rhs) {
        let scale = norm(row);
        if scale == 0.0 {
            if b.abs() > 0.0 {
                worst = worst.max(b.abs());
            }
            continue;
        }
        let mut r = row.clone();
        let mut br = b;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for (qk, &bk) in q.iter().zip(&beta) {
                let c = dot(qk, &r);
                for (ri, qi) in r.iter_mut().zip(qk) {
                    *ri -= c * qi;
                }
                br -= c * bk;
            }
        }
        let rn = norm(&r);
        if rn <= RANK_TOL * scale {
            let slack = br.abs() / scale;
            if slack > 1e-8 * (1.0 + b.abs() / scale) {
                worst = worst.max(slack);
            }
            continue;
        }
        for ri in &mut r {
            *ri /= rn;
        }
        q.push(r);
        beta.push(br / rn);
    }
    if worst > 0.0 {
        AffineBuild::Inconsistent(worst)
    } else {
        AffineBuild::Ok(AffineSet { q, beta })
    }
}

impl AffineSet {
    /// Euclidean projection of `v` onto `{x : Q x = beta}`, in place.
    fn project(&self, v: &mut [f64]) {
        for (qk, &bk) in self.q.iter().zip(&self.beta) {
            let c = dot(qk, v) - bk;
            for (vi, qi) in v.iter_mut().zip(qk) {
                *vi -= c * qi;
            }
        }
    }

    /// Component of `v` in the row space, as coefficients on the orthonormal rows.
    fn coefficients(&self, v: &[f64]) -> Vec<f64> {
        self.q.iter().map(|qk| dot(qk, v)).collect()
    }
}

fn recover_y(rows: &[Vec<f64>], target: &[f64]) -> DVector<f64> {
    let m = rows.len();
    if m == 0 {
        return DVector::zeros(0);
    }
    let n = target.len();
    let at = DMatrix::from_fn(n, m, |i, k| rows[k][i]);
    let t = DVector::from_column_slice(target);
    match at.clone().svd(true, true).solve(&t, 1e-12) {
        Ok(y) => y,
        Err(_) => DVector::zeros(m),
    }
}

/// Solves `p` by over-relaxed ADMM with residual balancing.
pub fn admm_solve(p: &SdpProblem, settings: &AdmmSettings) -> Result<SdpSolution> {
    p.validate()?;
    if p.total_dim() > settings.max_total_dim {
        return Err(Error::TooLarge(format!("total block dimension {} exceeds {}", p.total_dim(), settings.max_total_dim)));
    }
    let layout = Layout::new(p);
    let rows: Vec<Vec<f64>> = p.constraints.iter().map(|a| layout.to_dense_row(a)).collect();
    let c = layout.to_dense_row(&p.cost);
    let n = layout.len;

    let unpack_all = |x: &[f64]| (0..layout.dims.len()).map(|b| layout.unpack(b, x)).collect::<Vec<_>>();

    let affine = match build_affine(&rows, &p.rhs) {
        AffineBuild::Ok(a) => a,
        AffineBuild::Inconsistent(r) => {
            let zero = vec![0.0; n];
            return Ok(SdpSolution {
                status: SdpStatus::InfeasibleSuspected,
                primal_value: f64::NAN,
                dual_value: f64::NAN,
                x: unpack_all(&zero),
                y: DVector::zeros(p.num_constraints()),
                primal_residual: r,
                dual_residual: 0.0,
                iterations: 0,
            });
        }
    };
    if affine.q.is_empty() && p.num_constraints() > 0 && p.rhs.iter().any(|&b| b != 0.0) {
        return Err(Error::SingularConstraintGram);
    }

    let b_norm = p.rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
    let c_norm = norm(&c);

    let mut sigma = 1.0;
    let mut x = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut xhat = vec![0.0; n];

    let mut status = SdpStatus::MaxIterations;
    let mut iterations = settings.max_iter;
    let mut pres = f64::INFINITY;
    let mut dres = f64::INFINITY;
    let mut pobj = f64::NAN;
    let mut dobj = f64::NAN;

    for it in 1..=settings.max_iter {
        for k in 0..n {
            v[k] = z[k] - u[k] - c[k] / sigma;
        }
        affine.project(&mut v);
        std::mem::swap(&mut x, &mut v);

        for k in 0..n {
            xhat[k] = OVER_RELAXATION * x[k] + (1.0 - OVER_RELAXATION) * z[k];
        }
        for k in 0..n {
            z[k] = xhat[k] + u[k];
        }
        layout.project_cone(&mut z)?;
        for k in 0..n {
            u[k] += xhat[k] - z[k];
        }

        let check = it % 10 == 0 || it == settings.max_iter;
        if !check {
            continue;
        }

        // dual slack s = -sigma u lies in the cone; residual of c - s outside range(Aᵀ)
        let cs: Vec<f64> = (0..n).map(|k| c[k] + sigma * u[k]).collect();
        let g = affine.coefficients(&cs);
        let mut dual_res = cs.clone();
        for (qk, gk) in affine.q.iter().zip(&g) {
            for (di, qi) in dual_res.iter_mut().zip(qk) {
                *di -= gk * qi;
            }
        }
        let prim_res: f64 = x.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        pres = prim_res;
        dres = norm(&dual_res);
        pobj = dot(&c, &x);
        dobj = dot(&affine.beta, &g);

        let pres_rel = pres / (1.0 + b_norm.max(norm(&x)));
        let dres_rel = dres / (1.0 + c_norm);
        let gap_rel = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        if pres_rel <= settings.tol && dres_rel <= settings.tol && gap_rel <= settings.tol {
            status = SdpStatus::Optimal;
            iterations = it;
            break;
        }

        if it % ADAPT_EVERY == 0 {
            if pres_rel > ADAPT_RATIO * dres_rel {
                sigma *= 2.0;
                u.iter_mut().for_each(|ui| *ui /= 2.0);
            } else if dres_rel > ADAPT_RATIO * pres_rel {
                sigma /= 2.0;
                u.iter_mut().for_each(|ui| *ui *= 2.0);
            }
        }

        if it == settings.max_iter {
            if pres_rel > settings.tol && pres_rel > 100.0 * dres_rel {
                status = SdpStatus::InfeasibleSuspected;
            }
        }
    }

    let s: Vec<f64> = u.iter().map(|ui| -sigma * ui).collect();
    let cs: Vec<f64> = (0..n).map(|k| c[k] - s[k]).collect();
    let y = recover_y(&rows, &cs);

    Ok(SdpSolution {
        status,
        primal_value: pobj + p.offset,
        dual_value: dobj + p.offset,
        x: unpack_all(&z),
        y,
        primal_residual: pres,
        dual_residual: dres,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::problem::{BlockSym, Entry};

    fn e(block: usize, i: usize, j: usize, value: f64) -> Entry {
        Entry { block, i, j, value }
    }

    #[test]
    fn scalar_equality() {
        let p = SdpProblem::new(
            vec![1],
            BlockSym::from_entries([e(0, 0, 0, 1.0)]),
            vec![BlockSym::from_entries([e(0, 0, 0, 1.0)])],
            vec![5.0],
        )
        .unwrap();
        let sol = admm_solve(&p, &AdmmSettings::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_value - 5.0).abs() < 1e-5);
    }

    #[test]
    fn contradictory_constraints() {
        let a = BlockSym::from_entries([e(0, 0, 0, 1.0)]);
        let p = SdpProblem::new(vec![1], a.clone(), vec![a.clone(), a], vec![1.0, 2.0]).unwrap();
        let sol = admm_solve(&p, &AdmmSettings::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::InfeasibleSuspected);
    }

    #[test]
    fn min_eigenvalue_program() {
        // min ⟨A, X⟩ s.t. tr X = 1, X ⪰ 0 has value λ_min(A)
        let a = [[2.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 1.0]];
        let mut cost = vec![];
        for i in 0..3 {
            for j in i..3 {
                cost.push(e(0, i, j, a[i][j]));
            }
        }
        let tr = BlockSym::from_entries((0..3).map(|i| e(0, i, i, 1.0)));
        let p = SdpProblem::new(vec![3], BlockSym::from_entries(cost), vec![tr], vec![1.0]).unwrap();
        let sol = admm_solve(&p, &AdmmSettings { tol: 1e-8, ..Default::default() }).unwrap();
        let m = SymMatrix::from_rows(&a.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        let lmin = sym_eig(&m).unwrap().min();
        assert!(sol.is_optimal());
        assert!((sol.primal_value - lmin).abs() < 1e-6, "{} vs {}", sol.primal_value, lmin);
    }

    #[test]
    fn lp_block() {
        // min x1 + 2 x2 s.t. x1 + x2 = 1, x >= 0  ->  1
        let p = SdpProblem::new(
            vec![-2],
            BlockSym::from_entries([e(0, 0, 0, 1.0), e(0, 1, 1, 2.0)]),
            vec![BlockSym::from_entries([e(0, 0, 0, 1.0), e(0, 1, 1, 1.0)])],
            vec![1.0],
        )
        .unwrap();
        let sol = admm_solve(&p, &AdmmSettings::default()).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.primal_value - 1.0).abs() < 1e-5);
        assert!((sol.x[0][(0, 0)] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn size_cap() {
        let p = SdpProblem::new(vec![300], BlockSym::default(), vec![], vec![]).unwrap();
        assert!(matches!(admm_solve(&p, &AdmmSettings::default()), Err(Error::TooLarge(_))));
    }
}
