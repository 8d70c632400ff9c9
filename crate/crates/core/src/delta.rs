//! Closed-edge counts between distinct large clusters and the matrix
//! functionals built from them.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::components::{build_components, for_each_edge, ComponentPartition};
use crate::coupling::CoupledConfiguration;
use crate::lattice::EdgeId;
use crate::linalg::{
    conjugate_gradient, hutchinson, top_eigenpairs, CsrMatrix, EigenOptions, ShiftedIdentity, SymOperator,
};
use crate::{Error, Result};

/// Component count above which `Tr(Delta^4)` is estimated stochastically.
pub const EXACT_TRACE4_MAX_K: usize = 2000;
pub const HUTCHINSON_PROBES: usize = 64;

/// Where every closed edge of a realization went.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClosedEdgeTally {
    pub total: u64,
    /// Both endpoints in the same cluster.
    pub internal: u64,
    /// At least one endpoint in a cluster below the threshold.
    pub touching_small: u64,
    /// Between two distinct indexed clusters.
    pub between: u64,
}

#[derive(Debug, Clone)]
pub struct DeltaMatrix {
    p: f64,
    threshold: u64,
    volume: u64,
    sizes: Vec<u64>,
    /// Smallest vertex of each indexed component.
    anchors: Vec<usize>,
    matrix: CsrMatrix,
    tally: ClosedEdgeTally,
}

impl DeltaMatrix {
    /// Build directly from sizes and upper-triangle entries `(a, b, count)`.
    pub fn from_entries(sizes: Vec<u64>, entries: &[(usize, usize, u64)], volume: u64) -> Result<Self> {
        let k = sizes.len();
        let mut trip = Vec::with_capacity(entries.len());
        for &(a, b, c) in entries {
            if a == b || a >= k || b >= k {
                return Err(Error::InvalidArgument(format!("bad entry ({a}, {b})")));
            }
            trip.push((a.min(b), a.max(b), c as f64));
        }
        let threshold = sizes.iter().copied().min().unwrap_or(1);
        Ok(Self {
            p: f64::NAN,
            threshold,
            volume,
            anchors: (0..k).collect(),
            sizes,
            matrix: CsrMatrix::from_upper(k, &trip),
            tally: ClosedEdgeTally::default(),
        })
    }

    pub fn level(&self) -> f64 {
        self.p
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn volume(&self) -> u64 {
        self.volume
    }

    /// Number of indexed components.
    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn tally(&self) -> ClosedEdgeTally {
        self.tally
    }

    pub fn get(&self, a: usize, b: usize) -> u64 {
        self.matrix.get(a, b) as u64
    }

    /// Nonzero entries with `a < b`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.matrix.upper().map(|(a, b, v)| (a, b, v as u64))
    }
}

/// `Delta` at level `p` between components of size at least `m`.
pub fn build_delta(cfg: &CoupledConfiguration, p: f64, m: u64) -> Result<DeltaMatrix> {
    if !(0.0..1.0).contains(&p) || m == 0 {
        return Err(Error::InvalidArgument(format!("need p in [0, 1) and M >= 1, got {p}, {m}")));
    }
    let part = build_components(cfg, p);
    Ok(build_delta_from(cfg, &part, m))
}

/// Same as [`build_delta`] reusing a partition of `omega_p`.
pub fn build_delta_from(cfg: &CoupledConfiguration, part: &ComponentPartition, m: u64) -> DeltaMatrix {
    let p = part.level();
    let mut index = vec![u32::MAX; part.num_components()];
    let mut sizes = Vec::new();
    let mut anchors = Vec::new();
    // Components are numbered by smallest vertex, so scanning vertices in
    // order meets each component first at its anchor.
    for v in 0..part.labels().len() {
        let Some(c) = part.component_of(v) else { continue };
        if part.sizes()[c] >= m && index[c] == u32::MAX {
            index[c] = sizes.len() as u32;
            sizes.push(part.sizes()[c]);
            anchors.push(v);
        }
    }
    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut tally = ClosedEdgeTally::default();
    for_each_edge(cfg.spec(), |e, u, v| {
        if cfg.is_open(EdgeId(e), p) {
            return;
        }
        tally.total += 1;
        let (cu, cv) = (part.component_of(u).unwrap(), part.component_of(v).unwrap());
        if cu == cv {
            tally.internal += 1;
            return;
        }
        let (a, b) = (index[cu], index[cv]);
        if a == u32::MAX || b == u32::MAX {
            tally.touching_small += 1;
            return;
        }
        tally.between += 1;
        *counts.entry((a.min(b), a.max(b))).or_default() += 1;
    });
    let trip: Vec<(usize, usize, f64)> =
        counts.into_iter().map(|((a, b), c)| (a as usize, b as usize, c as f64)).collect();
    DeltaMatrix {
        p,
        threshold: m,
        volume: part.volume(),
        matrix: CsrMatrix::from_upper(sizes.len(), &trip),
        sizes,
        anchors,
        tally,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaNorms {
    pub frob2: f64,
    pub max_entry: f64,
    pub max_row_sq: f64,
    pub trace4: f64,
    pub trace4_is_estimate: bool,
    /// Standard error of the stochastic estimate, 0 when exact.
    pub trace4_se: f64,
}

pub fn norms(dm: &DeltaMatrix) -> DeltaNorms {
    let a = dm.matrix();
    let k = dm.k();
    let frob2 = a.frobenius_sq();
    let mut max_entry: f64 = 0.0;
    let mut max_row_sq: f64 = 0.0;
    for i in 0..k {
        let mut row = 0.0;
        for (_, v) in a.row(i) {
            max_entry = max_entry.max(v);
            row += v * v;
        }
        max_row_sq = max_row_sq.max(row);
    }
    let (trace4, trace4_se, estimate) = if k <= EXACT_TRACE4_MAX_K {
        (exact_trace4(a, k), 0.0, false)
    } else {
        let mut t = vec![0.0; k];
        let mut u = vec![0.0; k];
        let (mean, se) = hutchinson(k, HUTCHINSON_PROBES, 0x7ace4, |z| {
            a.apply(z, &mut t);
            a.apply(&t, &mut u);
            u.iter().map(|x| x * x).sum()
        });
        (mean, se, true)
    };
    DeltaNorms { frob2, max_entry, max_row_sq, trace4, trace4_is_estimate: estimate, trace4_se }
}

/// `||A^2||_F^2`, one sparse row of `A^2` at a time.
fn exact_trace4(a: &CsrMatrix, k: usize) -> f64 {
    let mut acc = vec![0.0; k];
    let mut touched: Vec<usize> = Vec::new();
    let mut total = 0.0;
    for i in 0..k {
        for (l, x) in a.row(i) {
            for (j, y) in a.row(l) {
                if acc[j] == 0.0 {
                    touched.push(j);
                }
                acc[j] += x * y;
            }
        }
        for &j in &touched {
            total += acc[j] * acc[j];
            acc[j] = 0.0;
        }
        touched.clear();
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WReport {
    pub t_min: f64,
    pub w_value: f64,
    pub s1: f64,
    pub s2: f64,
    pub frob2: f64,
    /// Set when `S1 = 0`, where the infimum sits at the boundary `t = 0`.
    pub boundary: bool,
}

impl WReport {
    /// The quadratic in `t` whose minimum is `w_value`.
    pub fn at(&self, t: f64, volume: u64, degree: usize) -> f64 {
        let c = t * degree as f64 / volume as f64;
        self.frob2 - 2.0 * c * self.s1 + c * c * self.s2
    }
}

/// Minimize `sum_{a != b} (Delta_ab - t m |a||b| / V)^2` over `t >= 0`.
pub fn w_functional(dm: &DeltaMatrix, volume: u64, degree: usize) -> Result<WReport> {
    if dm.k() < 2 {
        return Err(Error::DegenerateIndex(format!("{} indexed component(s)", dm.k())));
    }
    let s1: f64 = 2.0 * dm.entries().map(|(a, b, v)| (dm.sizes[a] * dm.sizes[b]) as f64 * v as f64).sum::<f64>();
    let sq: u128 = dm.sizes.iter().map(|&s| (s as u128).pow(2)).sum();
    let quart: u128 = dm.sizes.iter().map(|&s| (s as u128).pow(4)).sum();
    let s2 = (sq * sq - quart) as f64;
    let frob2 = dm.matrix().frobenius_sq();
    let boundary = s1 == 0.0;
    let t_min = volume as f64 * s1 / (degree as f64 * s2);
    let mut report = WReport { t_min, w_value: 0.0, s1, s2, frob2, boundary };
    report.w_value = report.at(t_min, volume, degree).max(0.0);
    Ok(report)
}

/// Direct `O(K^2)` evaluation of the sum defining the functional.
pub fn w_direct(dm: &DeltaMatrix, t: f64, volume: u64, degree: usize) -> f64 {
    let c = t * degree as f64 / volume as f64;
    let mut total = 0.0;
    for a in 0..dm.k() {
        for b in 0..dm.k() {
            if a != b {
                let r = dm.matrix.get(a, b) - c * (dm.sizes[a] * dm.sizes[b]) as f64;
                total += r * r;
            }
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub top_vector: Vec<f64>,
    pub residual: f64,
}

pub fn spectrum(dm: &DeltaMatrix, k: usize) -> Result<Spectrum> {
    let start: Vec<f64> = dm.sizes.iter().map(|&s| s as f64).collect();
    let opts = EigenOptions { start: Some(start), ..Default::default() };
    let e = top_eigenpairs(dm.matrix(), k, &opts)?;
    Ok(Spectrum { values: e.values, top_vector: e.vectors[0].clone(), residual: e.residuals[0] })
}

#[derive(Debug, Clone, Serialize)]
pub struct QSystem {
    pub p1: f64,
    pub p2_star: f64,
    #[serde(skip)]
    pub q: CsrMatrix,
    pub lambda1_delta: f64,
    pub lambda1_q: f64,
    pub lambda2_q: f64,
    pub top_vector: Vec<f64>,
    /// `lambda1(Q) / (1 - lambda1(Q))`.
    pub qtilde_scale: f64,
    pub c_star: f64,
}

pub fn q_system(dm: &DeltaMatrix, p1: f64, eps1: f64, eps2: f64, degree: usize, volume: u64) -> Result<QSystem> {
    if !(eps2 > 0.0 && eps2 < eps1) {
        return Err(Error::InvalidArgument(format!("need 0 < eps2 < eps1, got {eps2}, {eps1}")));
    }
    if dm.k() == 0 || dm.matrix().nnz() == 0 {
        return Err(Error::DegenerateIndex("Delta has no nonzero entry".into()));
    }
    let lambda1_delta = spectrum(dm, 1)?.values[0];
    if lambda1_delta <= 0.0 {
        return Err(Error::DegenerateIndex("lambda1(Delta) is not positive".into()));
    }
    let p2_star = p1 + (1.0 - p1) * (1.0 - eps2 / eps1) / lambda1_delta;
    if p2_star >= 1.0 {
        return Err(Error::Range(format!("p2* = {p2_star} >= 1")));
    }
    let ratio = (1.0 - p2_star) / (1.0 - p1);
    let q = dm.matrix().map(|d| 1.0 - ratio.powf(d));
    let kq = 2.min(dm.k());
    let y: Vec<f64> = dm.sizes.iter().map(|&s| s as f64).collect();
    let eig = top_eigenpairs(&q, kq, &EigenOptions { start: Some(y.clone()), ..Default::default() })?;
    let lambda1_q = eig.values[0];
    let lambda2_q = eig.values.get(1).copied().unwrap_or(f64::NAN);
    let v = eig.vectors[0].clone();
    let mut dv = vec![0.0; v.len()];
    dm.matrix().apply(&v, &mut dv);
    let vdv: f64 = v.iter().zip(&dv).map(|(a, b)| a * b).sum();
    let vy: f64 = v.iter().zip(&y).map(|(a, b)| a * b).sum();
    let v2y2: f64 = v.iter().zip(&y).map(|(a, b)| a * a * b * b).sum();
    let denom = degree as f64 * (vy * vy - v2y2);
    if denom <= 0.0 {
        return Err(Error::DegenerateIndex("rank-one denominator is not positive".into()));
    }
    Ok(QSystem {
        p1,
        p2_star,
        q,
        lambda1_delta,
        lambda1_q,
        lambda2_q,
        top_vector: v,
        qtilde_scale: lambda1_q / (1.0 - lambda1_q),
        c_star: volume as f64 * vdv / denom,
    })
}

/// Access to `Q (I - Q)^{-1}`.
pub struct Neumann<'a> {
    q: &'a CsrMatrix,
    lambda1: f64,
}

pub fn neumann_bound(qs: &QSystem) -> Result<Neumann<'_>> {
    if qs.lambda1_q >= 1.0 {
        return Err(Error::Divergence(qs.lambda1_q));
    }
    Ok(Neumann { q: &qs.q, lambda1: qs.lambda1_q })
}

impl Neumann<'_> {
    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    /// `y = Q (I - Q)^{-1} x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let shifted = ShiftedIdentity { inner: self.q };
        let z = conjugate_gradient(&shifted, x, 1e-12, 20 * self.dim() + 100)?;
        let mut y = vec![0.0; z.len()];
        self.q.apply(&z, &mut y);
        Ok(y)
    }

    /// The whole operator as a dense matrix, for `K <= 2000`.
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        let k = self.dim();
        if k > EXACT_TRACE4_MAX_K {
            return Err(Error::Resource { what: "dense Neumann operator", requested: k as u128, cap: EXACT_TRACE4_MAX_K as u128 });
        }
        let q = self.q.to_dense();
        let inv = (DMatrix::identity(k, k) - &q)
            .try_inverse()
            .ok_or(Error::Divergence(self.lambda1))?;
        Ok(q * inv)
    }

    pub fn entry(&self, a: usize, b: usize) -> Result<f64> {
        Ok(self.dense()?[(a, b)])
    }

    pub fn frobenius(&self) -> Result<f64> {
        Ok(self.dense()?.norm())
    }

    /// `lambda1 / (1 - lambda1)`, a lower bound for the Frobenius norm.
    pub fn spectral_scale(&self) -> f64 {
        self.lambda1 / (1.0 - self.lambda1)
    }
}

/// Slack constants for the realization-level inequality list. The paper
/// leaves them unspecified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaConstants {
    pub c_dl: f64,
    pub o_m: f64,
}

impl Default for OmegaConstants {
    fn default() -> Self {
        Self { c_dl: 1.0, o_m: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `lhs <= rhs` is expected.
    Upper,
    /// `lhs >= rhs` is expected.
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaLine {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub direction: Direction,
    /// Lines whose right side involves a config constant carry no verdict.
    pub constant_dependent: bool,
}

/// The seven realization-level inequalities, evaluated with the realized
/// `chi_hat` in place of the susceptibility.
pub fn omega_good_report(
    dm: &DeltaMatrix,
    nm: &DeltaNorms,
    w: Option<&WReport>,
    degree: usize,
    chi_hat: f64,
    c: OmegaConstants,
) -> Vec<OmegaLine> {
    let v = dm.volume() as f64;
    let m = degree as f64;
    let log_v = v.ln();
    let max_a = dm.sizes.iter().copied().max().unwrap_or(0) as f64;
    let sum_a2: f64 = dm.sizes.iter().map(|&s| (s as f64).powi(2)).sum();
    let s1 = w.map(|r| r.s1).unwrap_or(0.0);
    let line = |name, lhs: f64, rhs: f64, direction, constant_dependent| OmegaLine {
        name,
        lhs,
        rhs,
        ratio: lhs / rhs,
        direction,
        constant_dependent,
    };
    vec![
        line("max_size", max_a, 2.0 * chi_hat.powi(2) * (v / chi_hat.powi(3)).ln(), Direction::Upper, false),
        line("sum_size_sq", sum_a2, (1.0 + 1.0 / m) * v * chi_hat, Direction::Upper, false),
        line("frob2", nm.frob2, c.c_dl * chi_hat.powi(2), Direction::Upper, true),
        line("s1", s1, (1.0 - c.o_m) * v * m * chi_hat.powi(2), Direction::Lower, true),
        line("trace4", nm.trace4, (1.0 + c.o_m) * m.powi(4) * chi_hat.powi(4), Direction::Upper, true),
        line("max_entry", nm.max_entry, log_v.powi(5) * chi_hat.powi(4) / v, Direction::Upper, false),
        line("max_row_sq", nm.max_row_sq, log_v.powi(10) * chi_hat.powi(5) / v, Direction::Upper, false),
    ]
}

/// One realization's JSON record.
#[derive(Debug, Clone, Serialize)]
pub struct DeltaReport {
    pub seed: u64,
    pub p: f64,
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(rename = "K")]
    pub k: usize,
    pub frob2: f64,
    pub max_entry: f64,
    pub max_row_sq: f64,
    pub trace4: f64,
    pub trace4_is_estimate: bool,
    pub trace4_se: f64,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub t_min: Option<f64>,
    pub w_value: Option<f64>,
    #[serde(rename = "S1")]
    pub s1: Option<f64>,
    #[serde(rename = "S2")]
    pub s2: Option<f64>,
    pub t_min_boundary: Option<bool>,
    pub p2_star: Option<f64>,
    #[serde(rename = "lambda1_Q")]
    pub lambda1_q: Option<f64>,
    pub c_star: Option<f64>,
    pub omega_good: Vec<OmegaLine>,
    pub notes: Vec<String>,
}
