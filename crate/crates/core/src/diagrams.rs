//! Two-point function estimates and the convolution sums built on them,
//! random-walk return probabilities on the torus, and fits of the
//! susceptibility constants.

use std::io::{self, Read, Write};

use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::coupling::CoupledConfiguration;
use crate::lattice::{EdgeId, EdgeModel, TorusSpec, VertexId};
use crate::rng::{derive_seed, seeded_rng};
use crate::stats::{fit_through_origin, mean_se};
use crate::{Error, Result};

/// Largest volume handled by the FFT engine.
pub const FFT_VOLUME_CAP: u64 = 1 << 26;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointField {
    pub spec: TorusSpec,
    pub p: f64,
    pub replicates: u64,
    /// Indexed by vertex id; the origin is vertex 0.
    pub tau: Vec<f64>,
    pub se: Vec<f64>,
}

impl TwoPointField {
    /// A field with given values and zero error, e.g. for synthetic checks.
    pub fn from_values(spec: TorusSpec, tau: Vec<f64>) -> Result<Self> {
        if tau.len() as u64 != spec.volume() {
            return Err(Error::InvalidArgument("field length differs from the volume".into()));
        }
        let se = vec![0.0; tau.len()];
        Ok(Self { spec, p: f64::NAN, replicates: 0, tau, se })
    }

    /// `sum_x tau(x)`, the mean size of the cluster of the origin.
    pub fn mass(&self) -> f64 {
        self.tau.iter().sum()
    }
}

/// Cluster of vertex 0 in `omega_p`, as a list of vertices.
pub fn origin_cluster(cfg: &CoupledConfiguration, p: f64, seen: &mut [u32], stamp: u32) -> Vec<usize> {
    let spec = cfg.spec();
    let mut out = vec![0usize];
    seen[0] = stamp;
    let mut head = 0;
    while head < out.len() {
        let v = out[head];
        head += 1;
        spec.for_each_incident(v, |e, u| {
            if seen[u] != stamp && cfg.is_open(EdgeId(e), p) {
                seen[u] = stamp;
                out.push(u);
            }
        });
    }
    out
}

/// `R` independent explorations of the cluster of the origin; replicate `r`
/// uses the child seed `derive_seed(master_seed, r)`.
pub fn estimate_tau(spec: &TorusSpec, p: f64, replicates: u64, master_seed: u64) -> Result<TwoPointField> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("need at least one replicate".into()));
    }
    let v = spec.volume() as usize;
    let counts = (0..replicates)
        .into_par_iter()
        .fold(
            || (vec![0u64; v], vec![0u32; v], 0u32),
            |(mut counts, mut seen, stamp), r| {
                let cfg = CoupledConfiguration::new(spec.clone(), derive_seed(master_seed, r));
                let stamp = stamp + 1;
                for x in origin_cluster(&cfg, p, &mut seen, stamp) {
                    counts[x] += 1;
                }
                (counts, seen, stamp)
            },
        )
        .map(|(c, _, _)| c)
        .reduce(|| vec![0u64; v], |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        });
    let rf = replicates as f64;
    let tau: Vec<f64> = counts.iter().map(|&c| c as f64 / rf).collect();
    let se = tau.iter().map(|&t| (t * (1.0 - t) / rf).sqrt()).collect();
    Ok(TwoPointField { spec: spec.clone(), p, replicates, tau, se })
}

fn fft_nd(data: &mut [Complex<f64>], n: usize, d: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut line = vec![Complex::new(0.0, 0.0); n];
    let vol = data.len();
    for axis in 0..d {
        let stride = n.pow(axis as u32);
        for base in 0..vol {
            if (base / stride) % n != 0 {
                continue;
            }
            for (i, slot) in line.iter_mut().enumerate() {
                *slot = data[base + i * stride];
            }
            fft.process(&mut line);
            for (i, &val) in line.iter().enumerate() {
                data[base + i * stride] = val;
            }
        }
    }
}

fn check_fft(spec: &TorusSpec) -> Result<()> {
    if spec.volume() > FFT_VOLUME_CAP {
        return Err(Error::Resource { what: "FFT volume", requested: spec.volume() as u128, cap: FFT_VOLUME_CAP as u128 });
    }
    Ok(())
}

/// Forward transform of a real field.
pub fn fourier(spec: &TorusSpec, f: &[f64]) -> Result<Vec<Complex<f64>>> {
    check_fft(spec)?;
    let mut data: Vec<Complex<f64>> = f.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft_nd(&mut data, spec.side(), spec.dim(), false);
    Ok(data)
}

/// `k`-fold cyclic self-convolution `T_k`.
pub fn convolve_tk(field: &TwoPointField, k: u32) -> Result<Vec<f64>> {
    convolve_power(&field.spec, &field.tau, k)
}

pub fn convolve_power(spec: &TorusSpec, f: &[f64], k: u32) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let mut data = fourier(spec, f)?;
    data.iter_mut().for_each(|z| *z = z.powu(k));
    fft_nd(&mut data, spec.side(), spec.dim(), true);
    let v = spec.volume() as f64;
    Ok(data.iter().map(|z| z.re / v).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagramValue {
    pub value: f64,
    /// First-order propagation of the per-entry errors, ignoring their
    /// correlations.
    pub se: f64,
}

fn diagram(field: &TwoPointField, k: u32) -> Result<DiagramValue> {
    let value = convolve_tk(field, k)?[0];
    let lower = convolve_tk(field, k - 1)?;
    let spec = &field.spec;
    let neg = |x: usize| {
        let c: Vec<usize> = spec.coords(VertexId(x)).iter().map(|&c| (spec.side() - c) % spec.side()).collect();
        spec.vertex(&c).0
    };
    let var: f64 = (0..lower.len()).map(|x| (k as f64 * lower[neg(x)] * field.se[x]).powi(2)).sum();
    Ok(DiagramValue { value, se: var.sqrt() })
}

/// `(tau * tau * tau)(0)`.
pub fn triangle_diagram(field: &TwoPointField) -> Result<DiagramValue> {
    diagram(field, 3)
}

/// `(tau * tau * tau * tau)(0)`.
pub fn square_diagram(field: &TwoPointField) -> Result<DiagramValue> {
    diagram(field, 4)
}

/// Eigenvalues of the simple-random-walk transition matrix.
#[derive(Debug, Clone)]
pub struct RwSpectrum {
    pub spec: TorusSpec,
    pub lambdas: Vec<f64>,
}

impl RwSpectrum {
    pub fn new(spec: &TorusSpec) -> Result<Self> {
        let mut step = vec![0.0; spec.volume() as usize];
        let w = 1.0 / spec.degree() as f64;
        for u in spec.neighbors(VertexId(0)) {
            step[u.0] += w;
        }
        let lambdas = fourier(spec, &step)?.iter().map(|z| z.re).collect();
        Ok(Self { spec: spec.clone(), lambdas })
    }

    /// Return probability after `j` steps, `(1/V) sum_k lambda_k^j`.
    pub fn p(&self, j: u32) -> f64 {
        let s: f64 = self.lambdas.iter().map(|l| l.powi(j as i32)).sum();
        (s / self.lambdas.len() as f64).clamp(0.0, 1.0)
    }
}

pub fn rw_return(spec: &TorusSpec, j: u32) -> Result<f64> {
    Ok(RwSpectrum::new(spec)?.p(j))
}

/// Fraction of `walks` simple random walks from the origin that sit at the
/// origin after `j` steps, for `j = 0..=j_max`, with binomial SEs.
pub fn rw_monte_carlo(spec: &TorusSpec, j_max: u32, walks: u64, seed: u64) -> Vec<(f64, f64)> {
    let hits = (0..walks)
        .into_par_iter()
        .fold(
            || vec![0u64; j_max as usize + 1],
            |mut acc, w| {
                let mut rng = seeded_rng(derive_seed(seed, w));
                let mut x = 0usize;
                let m = spec.degree();
                acc[0] += 1;
                for j in 1..=j_max as usize {
                    let pick = rng.random_range(0..m);
                    let mut chosen = x;
                    let mut idx = 0;
                    spec.for_each_incident(x, |_, u| {
                        if idx == pick {
                            chosen = u;
                        }
                        idx += 1;
                    });
                    x = chosen;
                    acc[j] += (x == 0) as u64;
                }
                acc
            },
        )
        .reduce(|| vec![0u64; j_max as usize + 1], |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        });
    let n = walks as f64;
    hits.iter()
        .map(|&h| {
            let f = h as f64 / n;
            (f, (f * (1.0 - f) / n).sqrt())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RwBoundRow {
    pub j: u32,
    pub pair_sum: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RwBoundReport {
    /// Fitted on `j <= j_max / 2`, at least 1.
    pub c: f64,
    pub rows: Vec<RwBoundRow>,
    /// Whether the bound with the fitted `c` holds on every row, including
    /// the held-out upper half.
    pub holds: bool,
}

/// `p_j + p_{j+1}` against `C j^{-d/2} + 2/V` for `j = 1..=j_max`.
pub fn rw_bound_check(spec: &TorusSpec, j_max: u32) -> Result<RwBoundReport> {
    if j_max < 4 {
        return Err(Error::InvalidArgument("need j_max >= 4".into()));
    }
    let rw = RwSpectrum::new(spec)?;
    let v = spec.volume() as f64;
    let half_d = spec.dim() as f64 / 2.0;
    let sums: Vec<(u32, f64)> = (1..=j_max).map(|j| (j, rw.p(j) + rw.p(j + 1))).collect();
    let c = sums
        .iter()
        .filter(|(j, _)| *j <= j_max / 2)
        .map(|&(j, s)| (s - 2.0 / v) * (j as f64).powf(half_d))
        .fold(1.0, f64::max);
    let rows: Vec<RwBoundRow> = sums
        .iter()
        .map(|&(j, s)| RwBoundRow { j, pair_sum: s, bound: c * (j as f64).powf(-half_d) + 2.0 / v })
        .collect();
    let holds = rows.iter().all(|r| r.pair_sum <= r.bound * (1.0 + 1e-12));
    Ok(RwBoundReport { c, rows, holds })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlateauReport {
    /// `(distance, mean tau, vertices in the bin)`.
    pub bins: Vec<(u64, f64, u64)>,
    /// Smallest `C` with bin mean `<= C (<x>^{2-d} + chi/V)` in every bin.
    pub c_fit: f64,
    /// Mean of `tau` over distances at least half the maximum.
    pub plateau_avg: f64,
    /// `plateau_avg * V / chi_hat`.
    pub plateau_ratio: f64,
}

pub fn plateau_fit(field: &TwoPointField, chi_hat: f64) -> PlateauReport {
    let spec = &field.spec;
    let v = spec.volume() as f64;
    let d = spec.dim() as f64;
    let mut sums: Vec<(f64, u64)> = Vec::new();
    for (x, &t) in field.tau.iter().enumerate() {
        let r = spec.torus_distance(VertexId(0), VertexId(x)) as usize;
        if sums.len() <= r {
            sums.resize(r + 1, (0.0, 0));
        }
        sums[r].0 += t;
        sums[r].1 += 1;
    }
    let bins: Vec<(u64, f64, u64)> =
        sums.iter().enumerate().filter(|(_, s)| s.1 > 0).map(|(r, s)| (r as u64, s.0 / s.1 as f64, s.1)).collect();
    let c_fit = bins
        .iter()
        .map(|&(r, mean, _)| mean / ((r.max(1) as f64).powf(2.0 - d) + chi_hat / v))
        .fold(0.0, f64::max);
    let max_r = bins.last().map(|b| b.0).unwrap_or(0);
    let (mut s, mut c) = (0.0, 0u64);
    for &(r, mean, count) in &bins {
        if 2 * r >= max_r {
            s += mean * count as f64;
            c += count;
        }
    }
    let plateau_avg = s / c as f64;
    PlateauReport { bins, c_fit, plateau_avg, plateau_ratio: plateau_avg * v / chi_hat }
}

/// Per-level inputs for the constant fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SusceptibilityPoint {
    pub p: f64,
    pub chi: f64,
    /// Standard error of `chi`; 0 means unweighted.
    pub chi_se: f64,
    /// Mean of `sum |C|^3 / V`.
    pub second_moment: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub c1: f64,
    pub r_squared: f64,
    pub c2: f64,
    /// Mean finite-difference `chi' / chi^2`.
    pub ratio: f64,
    pub inv_c1: f64,
    pub points: usize,
}

pub fn estimate_constants(points: &[SusceptibilityPoint], p_c: f64) -> Result<ConstantsReport> {
    let mut pts: Vec<SusceptibilityPoint> = points.iter().copied().filter(|q| q.p < p_c && q.chi > 0.0).collect();
    if pts.len() < 4 {
        return Err(Error::Fit(format!("{} usable subcritical points, need 4", pts.len())));
    }
    pts.sort_by(|a, b| a.p.total_cmp(&b.p));
    let eps: Vec<f64> = pts.iter().map(|q| p_c - q.p).collect();
    let inv: Vec<f64> = pts.iter().map(|q| 1.0 / q.chi).collect();
    let weighted = pts.iter().all(|q| q.chi_se > 0.0);
    let w: Vec<f64> = pts
        .iter()
        .map(|q| if weighted { (q.chi * q.chi / q.chi_se).powi(2) } else { 1.0 })
        .collect();
    let fit = fit_through_origin(&eps, &inv, &w);
    let c2 = pts.iter().map(|q| q.second_moment / q.chi.powi(3)).sum::<f64>() / pts.len() as f64;
    // chi' / chi^2 = -(1/chi)'; differencing 1/chi avoids the pole at p_c.
    let ratios: Vec<f64> = (1..pts.len() - 1)
        .map(|i| -(inv[i + 1] - inv[i - 1]) / (pts[i + 1].p - pts[i - 1].p))
        .collect();
    let (ratio, _) = mean_se(&ratios);
    Ok(ConstantsReport {
        c1: 1.0 / fit.slope,
        r_squared: fit.r_squared,
        c2,
        ratio,
        inv_c1: fit.slope,
        points: pts.len(),
    })
}

const FIELD_MAGIC: &[u8; 4] = b"TPF1";

/// Little-endian dump: magic, d, n, model tag, L, p, R, tau, se.
pub fn write_field(field: &TwoPointField, mut w: impl Write) -> io::Result<()> {
    let spec = &field.spec;
    let (tag, l) = match spec.model() {
        EdgeModel::NearestNeighbor => (0u32, 1u32),
        EdgeModel::SpreadOut(l) => (1, l),
    };
    w.write_all(FIELD_MAGIC)?;
    for x in [spec.dim() as u32, spec.side() as u32, tag, l] {
        w.write_all(&x.to_le_bytes())?;
    }
    w.write_all(&field.p.to_le_bytes())?;
    w.write_all(&field.replicates.to_le_bytes())?;
    for x in field.tau.iter().chain(&field.se) {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field(mut r: impl Read) -> Result<TwoPointField> {
    let bad = |m: &str| Error::InvalidArgument(format!("field dump: {m}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated"))?;
    if &magic != FIELD_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut u = [0u8; 4];
    let mut words = [0u32; 4];
    for slot in words.iter_mut() {
        r.read_exact(&mut u).map_err(|_| bad("truncated"))?;
        *slot = u32::from_le_bytes(u);
    }
    let model = if words[2] == 0 { EdgeModel::NearestNeighbor } else { EdgeModel::SpreadOut(words[3]) };
    let spec = TorusSpec::new(words[0] as usize, words[1] as usize, model)?;
    let mut e = [0u8; 8];
    r.read_exact(&mut e).map_err(|_| bad("truncated"))?;
    let p = f64::from_le_bytes(e);
    r.read_exact(&mut e).map_err(|_| bad("truncated"))?;
    let replicates = u64::from_le_bytes(e);
    let v = spec.volume() as usize;
    let mut vals = Vec::with_capacity(2 * v);
    for _ in 0..2 * v {
        r.read_exact(&mut e).map_err(|_| bad("truncated"))?;
        vals.push(f64::from_le_bytes(e));
    }
    let se = vals.split_off(v);
    Ok(TwoPointField { spec, p, replicates, tau: vals, se })
}
