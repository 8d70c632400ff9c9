//! Random graphs whose vertices are clusters: the multiplicative graph with
//! product-form edge intensities, the sprinkled graph driven by closed-edge
//! counts, a per-pair maximal coupling of the two, and an Erdős–Rényi
//! sampler near criticality used as an external reference.

use rand::Rng;
use serde::Serialize;

use crate::components::{build_components, for_each_edge};
use crate::coupling::CoupledConfiguration;
use crate::delta::{w_direct, DeltaMatrix};
use crate::lattice::EdgeId;
use crate::rng::seeded_rng;
use crate::unionfind::UnionFind;
use crate::{Error, Result};

/// Default cap on `K^2` for quadratic pair loops (K = 20000).
pub const DEFAULT_PAIR_CAP: u128 = 20_000 * 20_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedIndex {
    pub sizes: Vec<u64>,
    pub weights: Vec<f64>,
    pub q: f64,
    pub c2: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    pub max_w_over_sigma2: f64,
}

impl WeightedIndex {
    /// Weights `w_A = |A| c2^{1/3} / V^{2/3}`.
    pub fn new(sizes: Vec<u64>, c2: f64, volume: u64, q: f64) -> Result<Self> {
        if !(c2 > 0.0) || !(q >= 0.0) || sizes.contains(&0) {
            return Err(Error::InvalidArgument("need c2 > 0, q >= 0 and positive sizes".into()));
        }
        let scale = c2.cbrt() / (volume as f64).powf(2.0 / 3.0);
        let weights: Vec<f64> = sizes.iter().map(|&s| s as f64 * scale).collect();
        let sigma2: f64 = weights.iter().map(|w| w * w).sum();
        let sigma3: f64 = weights.iter().map(|w| w * w * w).sum();
        let wmax = weights.iter().copied().fold(0.0, f64::max);
        Ok(Self { sizes, weights, q, c2, sigma2, sigma3, max_w_over_sigma2: wmax / sigma2 })
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    /// `1 - exp(-q w_a w_b)`.
    pub fn prob(&self, a: usize, b: usize) -> f64 {
        -(-self.q * self.weights[a] * self.weights[b]).exp_m1()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentGraph {
    pub sizes: Vec<u64>,
    pub weights: Option<Vec<f64>>,
    /// Present edges `(a, b)` with `a < b` and the probability each was drawn with.
    pub edges: Vec<(u32, u32, f64)>,
}

fn check_pairs(k: usize, cap: u128) -> Result<()> {
    let req = (k as u128) * (k as u128);
    if req > cap {
        return Err(Error::Resource { what: "component pair loop", requested: req, cap });
    }
    Ok(())
}

pub fn sample_gtimes(idx: &WeightedIndex, seed: u64) -> Result<ComponentGraph> {
    sample_gtimes_capped(idx, seed, DEFAULT_PAIR_CAP)
}

pub fn sample_gtimes_capped(idx: &WeightedIndex, seed: u64, cap: u128) -> Result<ComponentGraph> {
    check_pairs(idx.k(), cap)?;
    let mut rng = seeded_rng(seed);
    let mut edges = Vec::new();
    for a in 0..idx.k() {
        for b in a + 1..idx.k() {
            let p = idx.prob(a, b);
            if rng.random::<f64>() < p {
                edges.push((a as u32, b as u32, p));
            }
        }
    }
    Ok(ComponentGraph { sizes: idx.sizes.clone(), weights: Some(idx.weights.clone()), edges })
}

/// `1 - ((1 - p2) / (1 - p1))^delta`.
pub fn sprinkle_prob(p1: f64, p2: f64, delta: u64) -> f64 {
    if delta == 0 {
        return 0.0;
    }
    let alpha = -((1.0 - p2) / (1.0 - p1)).ln();
    -(-alpha * delta as f64).exp_m1()
}

fn check_levels(p1: f64, p2: f64) -> Result<()> {
    if !(0.0 <= p1 && p1 <= p2 && p2 < 1.0) {
        return Err(Error::InvalidArgument(format!("need 0 <= p1 <= p2 < 1, got {p1}, {p2}")));
    }
    Ok(())
}

/// Sprinkled graph with independent edges.
pub fn sample_gcomp_bernoulli(dm: &DeltaMatrix, p1: f64, p2: f64, seed: u64) -> Result<ComponentGraph> {
    check_levels(p1, p2)?;
    let mut rng = seeded_rng(seed);
    let mut edges = Vec::new();
    for (a, b, d) in dm.entries() {
        let p = sprinkle_prob(p1, p2, d);
        if rng.random::<f64>() < p {
            edges.push((a as u32, b as u32, p));
        }
    }
    Ok(ComponentGraph { sizes: dm.sizes().to_vec(), weights: None, edges })
}

/// The closed edges counted by a `Delta` built from a coupled configuration,
/// kept so that the sprinkled graph can be read off the configuration's own
/// weights.
#[derive(Debug, Clone)]
pub struct GcompCoupler {
    cfg: CoupledConfiguration,
    p1: f64,
    sizes: Vec<u64>,
    /// `(edge id, a, b)` with `a < b`.
    edges: Vec<(u64, u32, u32)>,
}

impl GcompCoupler {
    /// `dm` must come from `cfg` (same seed, level and threshold).
    pub fn new(cfg: &CoupledConfiguration, dm: &DeltaMatrix) -> Result<Self> {
        let p1 = dm.level();
        if !(0.0..1.0).contains(&p1) {
            return Err(Error::Usage("coupled mode needs a Delta built from a configuration".into()));
        }
        let part = build_components(cfg, p1);
        let mut index = vec![u32::MAX; part.num_components()];
        for (i, &v) in dm.anchors().iter().enumerate() {
            let c = part.component_of(v).expect("full partition");
            if part.sizes()[c] != dm.sizes()[i] {
                return Err(Error::Usage("Delta does not match the configuration".into()));
            }
            index[c] = i as u32;
        }
        let mut edges = Vec::new();
        for_each_edge(cfg.spec(), |e, u, v| {
            if cfg.is_open(EdgeId(e), p1) {
                return;
            }
            let (a, b) = (index[part.component_of(u).unwrap()], index[part.component_of(v).unwrap()]);
            if a != b && a != u32::MAX && b != u32::MAX {
                edges.push((e, a.min(b), a.max(b)));
            }
        });
        let counted: u64 = dm.entries().map(|(_, _, d)| d).sum();
        if counted != edges.len() as u64 {
            return Err(Error::Usage("Delta does not match the configuration".into()));
        }
        Ok(Self { cfg: cfg.clone(), p1, sizes: dm.sizes().to_vec(), edges })
    }

    /// Edge `(a, b)` is present iff some counted edge has weight in `(p1, p2]`.
    /// With `resample = Some(seed)` the weights above `p1` are redrawn first,
    /// which leaves `omega_{p1}` and hence `Delta` unchanged.
    pub fn sample(&self, p2: f64, resample: Option<u64>) -> Result<ComponentGraph> {
        check_levels(self.p1, p2)?;
        let cfg = match resample {
            Some(s) => self.cfg.resampled_above(self.p1, s),
            None => self.cfg.clone(),
        };
        let mut present: Vec<(u32, u32)> =
            self.edges.iter().filter(|&&(e, _, _)| cfg.is_open(EdgeId(e), p2)).map(|&(_, a, b)| (a, b)).collect();
        present.sort_unstable();
        present.dedup();
        let mut counts = std::collections::HashMap::new();
        for &(_, a, b) in &self.edges {
            *counts.entry((a, b)).or_insert(0u64) += 1;
        }
        let edges = present.into_iter().map(|(a, b)| (a, b, sprinkle_prob(self.p1, p2, counts[&(a, b)]))).collect();
        Ok(ComponentGraph { sizes: self.sizes.clone(), weights: None, edges })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Merged {
    /// Nonincreasing.
    pub sizes: Vec<u64>,
    /// Nonincreasing; empty when the graph carries no weights.
    pub weights: Vec<f64>,
    /// Merged-component label of each input vertex.
    #[serde(skip)]
    pub labels: Vec<usize>,
}

pub fn merged_sizes(g: &ComponentGraph) -> Merged {
    let k = g.sizes.len();
    let mut uf = UnionFind::new(k);
    for &(a, b, _) in &g.edges {
        uf.union(a as usize, b as usize);
    }
    let mut label_of_root = vec![usize::MAX; k];
    let mut labels = vec![0; k];
    let mut sizes = Vec::new();
    let mut weights = Vec::new();
    for v in 0..k {
        let r = uf.find(v);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = sizes.len();
            sizes.push(0);
            weights.push(0.0);
        }
        let l = label_of_root[r];
        labels[v] = l;
        sizes[l] += g.sizes[v];
        if let Some(w) = &g.weights {
            weights[l] += w[v];
        }
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    if g.weights.is_some() {
        weights.sort_unstable_by(|a, b| b.total_cmp(a));
    } else {
        weights.clear();
    }
    Merged { sizes, weights, labels }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingReport {
    pub pairs: u64,
    pub disagreements: u64,
    pub sum_abs: f64,
    pub sum_sq: f64,
    /// `-ln((1 - p2) / (1 - p1))`.
    pub alpha: f64,
    /// The `t` at which the multiplicative intensities equal `alpha` times
    /// the rank-one profile.
    pub t_eff: f64,
    /// `alpha^2 / 2` times the functional at `t_eff`, an upper bound for
    /// `sum_sq` over unordered pairs.
    pub lipschitz_bound: f64,
}

/// Maximal coupling of the two graphs on a shared index: for every unordered
/// pair one uniform `u` decides both edges (`u < q_ab` and `u < p_ab`).
pub fn couple_edges(
    idx: &WeightedIndex,
    dm: &DeltaMatrix,
    p1: f64,
    p2: f64,
    degree: usize,
    seed: u64,
) -> Result<(CouplingReport, ComponentGraph, ComponentGraph)> {
    check_levels(p1, p2)?;
    if idx.sizes != dm.sizes() {
        return Err(Error::InvalidArgument("index and Delta disagree on components".into()));
    }
    let k = idx.k();
    check_pairs(k, DEFAULT_PAIR_CAP)?;
    let mut rng = seeded_rng(seed);
    let (mut gx, mut gc) = (Vec::new(), Vec::new());
    let mut report = CouplingReport {
        pairs: 0,
        disagreements: 0,
        sum_abs: 0.0,
        sum_sq: 0.0,
        alpha: -((1.0 - p2) / (1.0 - p1)).ln(),
        t_eff: 0.0,
        lipschitz_bound: 0.0,
    };
    for a in 0..k {
        for b in a + 1..k {
            let q = idx.prob(a, b);
            let p = sprinkle_prob(p1, p2, dm.get(a, b));
            let u: f64 = rng.random();
            let (x, c) = (u < q, u < p);
            if x {
                gx.push((a as u32, b as u32, q));
            }
            if c {
                gc.push((a as u32, b as u32, p));
            }
            report.pairs += 1;
            report.disagreements += (x != c) as u64;
            report.sum_abs += (p - q).abs();
            report.sum_sq += (p - q) * (p - q);
        }
    }
    let volume = dm.volume();
    if report.alpha > 0.0 {
        report.t_eff = idx.q * idx.c2.powf(2.0 / 3.0) / (report.alpha * degree as f64 * (volume as f64).cbrt());
        report.lipschitz_bound = 0.5 * report.alpha.powi(2) * w_direct(dm, report.t_eff, volume, degree);
    }
    let gx = ComponentGraph { sizes: idx.sizes.clone(), weights: Some(idx.weights.clone()), edges: gx };
    let gc = ComponentGraph { sizes: dm.sizes().to_vec(), weights: None, edges: gc };
    Ok((report, gx, gc))
}

/// Leading term of the intensity parameter for a window offset `lambda`:
/// `m chi^2 t_min / ((1 - p) chi') * (c2^{-2/3} V^{1/3} / chi + lambda)`.
pub fn q_lambda_leading(
    degree: usize,
    chi: f64,
    chi_prime: f64,
    t_min: f64,
    p: f64,
    c2: f64,
    volume: u64,
    lambda: f64,
) -> f64 {
    degree as f64 * chi * chi * t_min / ((1.0 - p) * chi_prime)
        * (c2.powf(-2.0 / 3.0) * (volume as f64).cbrt() / chi + lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErSample {
    pub n: u64,
    pub p: f64,
    pub edges: u64,
    /// Nonincreasing raw component sizes.
    pub sizes: Vec<u64>,
    /// `n^{-2/3} |C_i|`, nonincreasing.
    pub rescaled: Vec<f64>,
    /// `n^{-1/3} sum |C|^2 / n`.
    pub kappa_hat: f64,
}

/// `G(n, 1/n + lambda n^{-4/3})` by geometric skipping over the pair sequence.
pub fn er_oracle(n: u64, lambda: f64, seed: u64) -> Result<ErSample> {
    if n < 2 {
        return Err(Error::InvalidArgument("need n >= 2".into()));
    }
    let nf = n as f64;
    let p = 1.0 / nf + lambda * nf.powf(-4.0 / 3.0);
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Range(format!("edge probability {p} outside [0, 1]")));
    }
    let mut uf = UnionFind::new(n as usize);
    let mut edges = 0u64;
    if p >= 1.0 {
        for v in 1..n as usize {
            uf.union(0, v);
        }
        edges = n * (n - 1) / 2;
    } else if p > 0.0 {
        let mut rng = seeded_rng(seed);
        let log_q = (1.0 - p).ln();
        let (mut v, mut w): (u64, i64) = (1, -1);
        while v < n {
            let r: f64 = rng.random();
            w += 1 + ((1.0 - r).ln() / log_q).floor() as i64;
            while w >= v as i64 && v < n {
                w -= v as i64;
                v += 1;
            }
            if v < n {
                uf.union(v as usize, w as usize);
                edges += 1;
            }
        }
    }
    let mut sizes: Vec<u64> = (0..n as usize).filter(|&x| uf.is_root(x)).map(|r| uf.size_of_root(r) as u64).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let scale = nf.powf(-2.0 / 3.0);
    let squares: f64 = sizes.iter().map(|&s| (s as f64).powi(2)).sum();
    Ok(ErSample {
        n,
        p,
        edges,
        rescaled: sizes.iter().map(|&s| s as f64 * scale).collect(),
        kappa_hat: nf.powf(-1.0 / 3.0) * squares / nf,
        sizes,
    })
}
