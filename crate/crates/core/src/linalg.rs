//! Sparse symmetric matrices and the iterative solvers used on them: block
//! Krylov top eigenpairs with explicit projection, conjugate gradients and
//! Hutchinson trace estimation.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;

use crate::rng::seeded_rng;
use crate::{Error, Result};

/// A symmetric linear operator on `R^n`.
pub trait SymOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Compressed sparse rows with both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

const PAR_ROWS: usize = 1 << 15;

impl CsrMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, row_ptr: vec![0; n + 1], cols: Vec::new(), vals: Vec::new() }
    }

    /// Build from upper-triangle triplets `(i, j, v)` with `i < j`; duplicates
    /// are summed and the lower triangle mirrored. Diagonal triplets are kept
    /// once.
    pub fn from_upper(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut full: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * triplets.len());
        for &(i, j, v) in triplets {
            full.push((i, j, v));
            if i != j {
                full.push((j, i, v));
            }
        }
        full.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(full.len());
        let mut vals: Vec<f64> = Vec::with_capacity(full.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in full {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            cols.push(j as u32);
            vals.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().zip(&self.vals[r]).map(|(&c, &v)| (c as usize, v))
    }

    /// Stored entries `(i, j, v)` with `i < j`.
    pub fn upper(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).filter(move |&(j, _)| j > i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&(j as u32)) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// Same sparsity pattern with `f` applied to every stored value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { vals: self.vals.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

impl SymOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let row = |(i, out): (usize, &mut f64)| {
            *out = self.row(i).map(|(j, v)| v * x[j]).sum();
        };
        if self.n >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(row);
        } else {
            y.iter_mut().enumerate().for_each(row);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(b, a)| *b += alpha * a);
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Relative residual tolerance, measured against `max |theta|`.
    pub tol: f64,
    /// Matrix-vector product budget; `None` means `10 n + 200`.
    pub max_matvecs: Option<usize>,
    pub seed: u64,
    /// Optional first start vector.
    pub start: Option<Vec<f64>>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_matvecs: None, seed: 0x5eed, start: None }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Largest algebraic eigenvalues, descending.
    pub values: Vec<f64>,
    /// Unit eigenvectors, sign fixed so that their entry sum is nonnegative.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub matvecs: usize,
}

struct Basis {
    v: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
}

impl Basis {
    /// Orthogonalize `x` against the basis (two passes); returns its norm
    /// afterwards.
    fn orthogonalize(&self, x: &mut [f64]) -> f64 {
        for _ in 0..2 {
            for b in &self.v {
                let c = dot(b, x);
                axpy(-c, b, x);
            }
        }
        norm(x)
    }
}

/// Top `k` eigenpairs of a symmetric operator by a restarted block Krylov
/// method. The block size `k + 1` lets repeated eigenvalues up to that
/// multiplicity be resolved; a stagnating Krylov space is refilled with
/// fresh random directions.
pub fn top_eigenpairs(op: &dyn SymOperator, k: usize, opts: &EigenOptions) -> Result<EigenPairs> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("requested {k} eigenpairs of a {n}x{n} operator")));
    }
    let cap = opts.max_matvecs.unwrap_or(10 * n + 200);
    let block = (k + 1).min(n);
    let max_basis = n.min((4 * block + 20).max(40));
    let keep = (k + 5).min(max_basis.saturating_sub(block)).max(k);
    let mut rng = seeded_rng(opts.seed);
    let random_vec = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
    };

    let mut basis = Basis { v: Vec::new(), w: Vec::new() };
    let mut matvecs = 0usize;
    let mut pending: Vec<Vec<f64>> = Vec::new();
    if let Some(s) = &opts.start {
        pending.push(s.clone());
    }
    while pending.len() < block {
        pending.push(random_vec(&mut rng));
    }
    let mut best_residual = f64::INFINITY;

    loop {
        // Expand with the pending directions.
        for mut x in pending.drain(..) {
            if basis.v.len() >= max_basis {
                break;
            }
            let scale = norm(&x).max(f64::MIN_POSITIVE);
            let mut nrm = basis.orthogonalize(&mut x);
            let mut tries = 0;
            while nrm <= 1e-10 * scale && tries < 4 {
                x = random_vec(&mut rng);
                nrm = basis.orthogonalize(&mut x);
                tries += 1;
            }
            if nrm <= 1e-12 {
                continue;
            }
            x.iter_mut().for_each(|a| *a /= nrm);
            let mut y = vec![0.0; n];
            op.apply(&x, &mut y);
            matvecs += 1;
            basis.v.push(x);
            basis.w.push(y);
        }

        // Rayleigh-Ritz on the current basis.
        let s = basis.v.len();
        let h = DMatrix::from_fn(s, s, |i, j| 0.5 * (dot(&basis.v[i], &basis.w[j]) + dot(&basis.v[j], &basis.w[i])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let scale = eig.eigenvalues.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        let ritz = |idx: usize, src: &[Vec<f64>]| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for (c, b) in src.iter().enumerate() {
                axpy(eig.eigenvectors[(c, idx)], b, &mut out);
            }
            out
        };
        let take = keep.min(s);
        let mut xs = Vec::with_capacity(take);
        let mut ws = Vec::with_capacity(take);
        let mut residuals = Vec::with_capacity(take);
        let mut res_vecs = Vec::with_capacity(take);
        for &idx in order.iter().take(take) {
            let theta = eig.eigenvalues[idx];
            let x = ritz(idx, &basis.v);
            let w = ritz(idx, &basis.w);
            let r: Vec<f64> = w.iter().zip(&x).map(|(a, b)| a - theta * b).collect();
            residuals.push(norm(&r));
            res_vecs.push(r);
            xs.push(x);
            ws.push(w);
        }
        let worst = residuals[..k].iter().fold(0.0f64, |m, &r| m.max(r));
        best_residual = best_residual.min(worst);
        if worst <= opts.tol * scale || s == n {
            let mut vectors: Vec<Vec<f64>> = xs.into_iter().take(k).collect();
            for v in vectors.iter_mut() {
                let nv = norm(v);
                v.iter_mut().for_each(|a| *a /= nv);
                if v.iter().sum::<f64>() < 0.0 {
                    v.iter_mut().for_each(|a| *a = -*a);
                }
            }
            let values = order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect();
            return Ok(EigenPairs { values, vectors, residuals: residuals[..k].to_vec(), matvecs });
        }
        if matvecs >= cap {
            return Err(Error::Convergence { iterations: matvecs, best_residual });
        }

        // Next directions: residuals of the unconverged leading Ritz pairs.
        let unconverged: Vec<usize> =
            (0..take).filter(|&i| residuals[i] > opts.tol * scale).take(block).collect();
        let next: Vec<Vec<f64>> = unconverged.iter().map(|&i| res_vecs[i].clone()).collect();
        if s + next.len() > max_basis {
            // Thick restart on the leading Ritz vectors.
            basis.v = xs;
            basis.w = ws;
        }
        pending = next;
        if pending.is_empty() {
            pending.push(random_vec(&mut rng));
        }
    }
}

/// Solve `A x = b` for symmetric positive definite `A`.
pub fn conjugate_gradient(
    op: &dyn SymOperator,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = op.dim();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok(x);
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::InvalidArgument("operator is not positive definite".into()));
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
    }
    if rr.sqrt() <= tol * bnorm {
        Ok(x)
    } else {
        Err(Error::Convergence { iterations: max_iter, best_residual: rr.sqrt() / bnorm })
    }
}

/// Hutchinson estimate of `tr f(A)` given `quad(z) = z^T f(A) z`, with
/// Rademacher probes. Returns the mean and its standard error.
pub fn hutchinson(n: usize, probes: usize, seed: u64, mut quad: impl FnMut(&[f64]) -> f64) -> (f64, f64) {
    let mut rng = seeded_rng(seed);
    let samples: Vec<f64> = (0..probes)
        .map(|_| {
            let z: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            quad(&z)
        })
        .collect();
    crate::stats::mean_se(&samples)
}

/// `I - A` as an operator.
pub struct ShiftedIdentity<'a> {
    pub inner: &'a dyn SymOperator,
}

impl SymOperator for ShiftedIdentity<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.inner.apply(x, y);
        y.iter_mut().zip(x).for_each(|(a, b)| *a = b - *a);
    }
}
