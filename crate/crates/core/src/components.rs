//! Cluster extraction and statistics: single-level partitions, one-pass
//! Kruskal sweeps over a level grid, thresholded moments, percolation
//! restricted to large lower-level clusters, and the small-cluster pair
//! count obtained from the squared-size identity.

use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::{CoupledConfiguration, DEFAULT_STREAM_CAP};
use crate::lattice::{EdgeId, TorusSpec};
use crate::rng::derive_seed;
use crate::unionfind::UnionFind;
use crate::{Error, Result};

/// Label of vertices that do not take part in a restricted partition.
pub const EXCLUDED: u32 = u32::MAX;

/// How the large-cluster threshold `M` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ThresholdRule {
    Absolute(u64),
    /// `M = round(V^exponent)`, exponent in (1/2, 2/3).
    VolumeExponent(f64),
    /// `M = round(chi^5 / V)` with chi the realized susceptibility.
    ChiFifthOverVolume,
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::VolumeExponent(0.6)
    }
}

impl ThresholdRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdRule::Absolute(0) => Err(Error::InvalidArgument("M must be at least 1".into())),
            ThresholdRule::VolumeExponent(e) if !(e > 0.5 && e < 2.0 / 3.0) => Err(
                Error::InvalidArgument(format!("threshold exponent {e} outside (1/2, 2/3)")),
            ),
            _ => Ok(()),
        }
    }

    pub fn resolve(&self, volume: u64, chi_hat: f64) -> u64 {
        let raw = match *self {
            ThresholdRule::Absolute(m) => return m.max(1),
            ThresholdRule::VolumeExponent(e) => (volume as f64).powf(e),
            ThresholdRule::ChiFifthOverVolume => chi_hat.powi(5) / volume as f64,
        };
        (raw.round() as u64).max(1)
    }
}

/// Restricted percolation descriptor: level-`p2` edges inside the union of
/// level-`p1` clusters of size at least `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Restriction {
    pub p1: f64,
    pub p2: f64,
    pub m: u64,
}

#[derive(Debug, Clone)]
pub struct ComponentPartition {
    level: f64,
    volume: u64,
    labels: Vec<u32>,
    sizes: Vec<u64>,
    sorted: Vec<u64>,
    restriction: Option<Restriction>,
}

impl ComponentPartition {
    /// Compact a union-find forest into a partition. Components are numbered
    /// in order of their smallest vertex; vertices with `include == false`
    /// are labelled [`EXCLUDED`].
    pub fn from_union_find(
        uf: &mut UnionFind,
        level: f64,
        include: impl Fn(usize) -> bool,
        restriction: Option<Restriction>,
    ) -> Self {
        let n = uf.len();
        let mut root_label = vec![EXCLUDED; n];
        let mut labels = vec![EXCLUDED; n];
        let mut sizes: Vec<u64> = Vec::new();
        for v in 0..n {
            if !include(v) {
                continue;
            }
            let r = uf.find(v);
            if root_label[r] == EXCLUDED {
                root_label[r] = sizes.len() as u32;
                sizes.push(0);
            }
            let l = root_label[r];
            labels[v] = l;
            sizes[l as usize] += 1;
        }
        let mut sorted = sizes.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        Self { level, volume: n as u64, labels, sizes, sorted, restriction }
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn volume(&self) -> u64 {
        self.volume
    }

    pub fn restriction(&self) -> Option<Restriction> {
        self.restriction
    }

    pub fn num_components(&self) -> usize {
        self.sizes.len()
    }

    /// Component index of `v`, `None` for excluded vertices.
    pub fn component_of(&self, v: usize) -> Option<usize> {
        match self.labels[v] {
            EXCLUDED => None,
            l => Some(l as usize),
        }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Sizes indexed by component.
    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    /// Sizes in nonincreasing order.
    pub fn sorted_sizes(&self) -> &[u64] {
        &self.sorted
    }

    pub fn participating(&self) -> u64 {
        self.sizes.iter().sum()
    }

    pub fn max_size(&self) -> u64 {
        self.sorted.first().copied().unwrap_or(0)
    }

    /// `sum_C |C|^2`, i.e. the number of ordered connected pairs.
    pub fn sum_squares(&self) -> u128 {
        self.sizes.iter().map(|&s| (s as u128) * (s as u128)).sum()
    }

    /// `sum_C |C|^2 / V`.
    pub fn chi_hat(&self) -> f64 {
        self.sum_squares() as f64 / self.volume as f64
    }

    /// Vertex sets of every component, in component-index order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.sizes.len()];
        for (v, &l) in self.labels.iter().enumerate() {
            if l != EXCLUDED {
                out[l as usize].push(v);
            }
        }
        out
    }
}

/// Components of `omega_p`.
pub fn build_components(cfg: &CoupledConfiguration, p: f64) -> ComponentPartition {
    let mut uf = open_forest(cfg, p);
    ComponentPartition::from_union_find(&mut uf, p, |_| true, None)
}

fn open_forest(cfg: &CoupledConfiguration, p: f64) -> UnionFind {
    let spec = cfg.spec();
    let mut uf = UnionFind::new(spec.volume() as usize);
    for_each_edge(spec, |e, a, b| {
        if cfg.is_open(EdgeId(e), p) {
            uf.union(a, b);
        }
    });
    uf
}

/// Visit every edge as `(id, lower endpoint, upper endpoint)` in id order.
pub(crate) fn for_each_edge(spec: &TorusSpec, mut f: impl FnMut(u64, usize, usize)) {
    let half = spec.half_degree();
    let mut e = 0u64;
    for v in 0..spec.volume() as usize {
        for o in spec.offsets().iter().take(half) {
            f(e, v, spec.translate(v, o));
            e += 1;
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|p| !(0.0..=1.0).contains(p)) || grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("level grid must be ascending within [0, 1]".into()));
    }
    Ok(())
}

/// One Kruskal pass over the sorted edge stream, calling `visit` with the
/// forest at each grid level. The forest at grid point `p` contains exactly
/// the edges of `omega_p`.
pub fn sweep_visit(
    cfg: &CoupledConfiguration,
    grid: &[f64],
    mut visit: impl FnMut(usize, f64, &mut UnionFind),
) -> Result<()> {
    check_grid(grid)?;
    let Some(&p_max) = grid.last() else {
        return Ok(());
    };
    let spec = cfg.spec();
    let stream = cfg.sorted_edges_below(p_max, DEFAULT_STREAM_CAP)?;
    let mut uf = UnionFind::new(spec.volume() as usize);
    let mut edges = stream.iter().peekable();
    for (i, &p) in grid.iter().enumerate() {
        while let Some(&(e, w)) = edges.peek() {
            if w > p {
                break;
            }
            let (a, b) = spec.endpoints(e);
            uf.union(a.0, b.0);
            edges.next();
        }
        visit(i, p, &mut uf);
    }
    Ok(())
}

/// Full partitions at every grid level. Memory is `O(V)` per level; intended
/// for small tori and cross-checks.
pub fn sweep_partitions(cfg: &CoupledConfiguration, grid: &[f64]) -> Result<Vec<ComponentPartition>> {
    let mut out = Vec::with_capacity(grid.len());
    sweep_visit(cfg, grid, |_, p, uf| {
        out.push(ComponentPartition::from_union_find(uf, p, |_| true, None))
    })?;
    Ok(out)
}

/// Per-level summary row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub p: f64,
    pub num_components: usize,
    pub c1: u64,
    pub c2: u64,
    pub c3: u64,
    pub chi_hat: f64,
    pub s2_m: f64,
    pub s3_m: f64,
    pub max_size: u64,
    pub m: u64,
}

fn summarize(uf: &UnionFind, p: f64, rule: ThresholdRule) -> SweepSummary {
    let volume = uf.len() as u64;
    let mut top = [0u64; 3];
    let mut squares: u128 = 0;
    let mut sizes = Vec::with_capacity(uf.components());
    for v in 0..uf.len() {
        if uf.is_root(v) {
            let s = uf.size_of_root(v) as u64;
            sizes.push(s);
            squares += (s as u128) * (s as u128);
            if s > top[2] {
                top[2] = s;
                top.sort_unstable_by(|a, b| b.cmp(a));
            }
        }
    }
    let chi_hat = squares as f64 / volume as f64;
    let m = rule.resolve(volume, chi_hat);
    let (mut s2, mut s3) = (0.0, 0.0);
    for &s in sizes.iter().filter(|&&s| s >= m) {
        let x = s as f64;
        s2 += x * x;
        s3 += x * x * x;
    }
    SweepSummary {
        p,
        num_components: uf.components(),
        c1: top[0],
        c2: top[1],
        c3: top[2],
        chi_hat,
        s2_m: s2,
        s3_m: s3,
        max_size: top[0],
        m,
    }
}

/// Summaries at every grid level, computed in one pass.
pub fn sweep(cfg: &CoupledConfiguration, grid: &[f64], rule: ThresholdRule) -> Result<Vec<SweepSummary>> {
    let mut out = Vec::with_capacity(grid.len());
    sweep_visit(cfg, grid, |_, p, uf| out.push(summarize(uf, p, rule)))?;
    Ok(out)
}

/// `chi_hat` at every grid level, tracking `sum |C|^2` incrementally so the
/// cost is independent of the grid size.
pub fn sweep_chi(cfg: &CoupledConfiguration, grid: &[f64]) -> Result<Vec<f64>> {
    check_grid(grid)?;
    let Some(&p_max) = grid.last() else {
        return Ok(Vec::new());
    };
    let spec = cfg.spec();
    let volume = spec.volume();
    let stream = cfg.sorted_edges_below(p_max, DEFAULT_STREAM_CAP)?;
    let mut uf = UnionFind::new(volume as usize);
    let mut squares: u128 = volume as u128;
    let mut edges = stream.iter().peekable();
    let mut out = Vec::with_capacity(grid.len());
    for &p in grid {
        while let Some(&(e, w)) = edges.peek() {
            if w > p {
                break;
            }
            let (a, b) = spec.endpoints(e);
            if let Some((_, sa, sb)) = uf.union(a.0, b.0) {
                squares += 2 * sa as u128 * sb as u128;
            }
            edges.next();
        }
        out.push(squares as f64 / volume as f64);
    }
    Ok(out)
}

/// The level at which `chi_hat` first reaches `target`, scanning edges of
/// `omega_{p_max}` in weight order. `None` if it never does below `p_max`.
/// Under the coupling `chi_hat` is nondecreasing in `p`, so this is exact.
pub fn chi_crossing(cfg: &CoupledConfiguration, target: f64, p_max: f64) -> Result<Option<f64>> {
    let spec = cfg.spec();
    let volume = spec.volume();
    let mut squares: u128 = volume as u128;
    if squares as f64 / volume as f64 >= target {
        return Ok(Some(0.0));
    }
    let stream = cfg.sorted_edges_below(p_max, DEFAULT_STREAM_CAP)?;
    let mut uf = UnionFind::new(volume as usize);
    for (e, w) in stream.iter() {
        let (a, b) = spec.endpoints(e);
        if let Some((_, sa, sb)) = uf.union(a.0, b.0) {
            squares += 2 * sa as u128 * sb as u128;
            if squares as f64 / volume as f64 >= target {
                return Ok(Some(w));
            }
        }
    }
    Ok(None)
}

/// Empirical window centre: the median over replicates of the level where
/// `chi_hat` crosses `target`. At that level the median of `chi_hat` over
/// fresh replicates is `target` up to sampling error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowCenter {
    pub p: f64,
    pub target: f64,
    /// Sorted crossing levels of the replicates that crossed below `p_max`.
    pub crossings: Vec<f64>,
    pub unresolved: usize,
}

/// Replicate `r` uses seed `derive_seed(master_seed, r)`.
pub fn locate_window(
    spec: &TorusSpec,
    target: f64,
    p_max: f64,
    replicates: u64,
    master_seed: u64,
) -> Result<WindowCenter> {
    if replicates == 0 || !(target > 0.0) || !(0.0..=1.0).contains(&p_max) {
        return Err(Error::InvalidArgument("need replicates >= 1, target > 0, p_max in [0, 1]".into()));
    }
    let found = (0..replicates)
        .into_par_iter()
        .map(|r| chi_crossing(&CoupledConfiguration::new(spec.clone(), derive_seed(master_seed, r)), target, p_max))
        .collect::<Result<Vec<_>>>()?;
    let mut crossings: Vec<f64> = found.iter().flatten().copied().collect();
    crossings.sort_by(|a, b| a.total_cmp(b));
    let unresolved = found.len() - crossings.len();
    // Unresolved replicates cross above p_max, i.e. at the top of the order.
    let n = found.len();
    if 2 * unresolved >= n {
        return Err(Error::Range(format!("chi_hat stays below {target} up to p = {p_max} in {unresolved} of {n} replicates")));
    }
    let p = if n % 2 == 1 { crossings[n / 2] } else { 0.5 * (crossings[n / 2 - 1] + crossings[n / 2]) };
    Ok(WindowCenter { p, target, crossings, unresolved })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterMoments {
    pub m: u64,
    /// `s[k-1] = sum_{|A| >= M} |A|^k` for k = 1..4.
    pub s: [f64; 4],
    /// Over all components, regardless of `M`.
    pub chi_hat: f64,
    pub max_size: u64,
    /// Number of components of size at least `M`.
    pub count_m: usize,
}

pub fn cluster_moments(part: &ComponentPartition, m: u64) -> ClusterMoments {
    let m = m.max(1);
    let mut s = [0.0; 4];
    let mut count_m = 0;
    for &size in part.sizes().iter().filter(|&&x| x >= m) {
        count_m += 1;
        let x = size as f64;
        let mut pow = 1.0;
        for slot in s.iter_mut() {
            pow *= x;
            *slot += pow;
        }
    }
    ClusterMoments { m, s, chi_hat: part.chi_hat(), max_size: part.max_size(), count_m }
}

/// Percolation at `p2` restricted to edges with both endpoints in clusters
/// of `omega_{p1}` of size at least `m`.
pub fn restricted_components(
    cfg: &CoupledConfiguration,
    p1: f64,
    p2: f64,
    m: u64,
) -> Result<ComponentPartition> {
    if p1 > p2 {
        return Err(Error::InvalidArgument(format!("p1 = {p1} exceeds p2 = {p2}")));
    }
    let lower = build_components(cfg, p1);
    Ok(restrict(cfg, &lower, p2, m))
}

/// Same as [`restricted_components`] with the `p1` partition supplied.
pub fn restrict(cfg: &CoupledConfiguration, lower: &ComponentPartition, p2: f64, m: u64) -> ComponentPartition {
    let large: Vec<bool> = lower
        .labels()
        .iter()
        .map(|&l| l != EXCLUDED && lower.sizes()[l as usize] >= m)
        .collect();
    let mut uf = UnionFind::new(large.len());
    for_each_edge(cfg.spec(), |e, a, b| {
        if large[a] && large[b] && cfg.is_open(EdgeId(e), p2) {
            uf.union(a, b);
        }
    });
    let restriction = Restriction { p1: lower.level(), p2, m };
    ComponentPartition::from_union_find(&mut uf, p2, |v| large[v], Some(restriction))
}

/// `|N(p1, p2; M)|` as ordered pairs (coincident pairs included):
/// `sum_{C in comp_{p2}} |C|^2 - sum_{A in comp(p2, p1, M)} |A|^2`.
pub fn n_count(cfg: &CoupledConfiguration, p1: f64, p2: f64, m: u64) -> Result<u128> {
    let upper = build_components(cfg, p2);
    let restricted = restricted_components(cfg, p1, p2, m)?;
    Ok(upper.sum_squares() - restricted.sum_squares())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::TorusSpec;

    fn cfg(d: usize, n: usize, seed: u64) -> CoupledConfiguration {
        CoupledConfiguration::new(TorusSpec::nearest_neighbor(d, n).unwrap(), seed)
    }

    /// Weights of a cycle's edges; edge `i` joins `i` and `i+1`.
    fn cycle_weights(c: &CoupledConfiguration) -> Vec<f64> {
        c.spec().edges().map(|e| c.weight(e)).collect()
    }

    fn sets(part: &ComponentPartition) -> Vec<Vec<usize>> {
        let mut m = part.members();
        m.sort();
        m
    }

    #[test]
    fn crossing_is_exact_level() {
        for seed in 0..10 {
            let c = cfg(3, 6, seed);
            let target = 20.0;
            let p = chi_crossing(&c, target, 1.0).unwrap().unwrap();
            let chi = sweep_chi(&c, &[p - 1e-12, p]).unwrap();
            assert!(chi[0] < target && chi[1] >= target, "{chi:?}");
        }
        assert_eq!(chi_crossing(&cfg(2, 5, 0), 0.5, 1.0).unwrap(), Some(0.0));
        assert_eq!(chi_crossing(&cfg(2, 5, 0), 26.0, 1.0).unwrap(), None);
    }

    #[test]
    fn window_median() {
        let spec = TorusSpec::nearest_neighbor(2, 8).unwrap();
        let w = locate_window(&spec, 8.0, 1.0, 9, 3).unwrap();
        assert_eq!(w.unresolved, 0);
        assert_eq!(w.p, w.crossings[4]);
        let above = (0..9)
            .filter(|&r| {
                let c = CoupledConfiguration::new(spec.clone(), derive_seed(3, r));
                build_components(&c, w.p).chi_hat() >= 8.0
            })
            .count();
        assert_eq!(above, 5);
        assert!(matches!(locate_window(&spec, 8.0, 0.01, 9, 3), Err(Error::Range(_))));
    }

    #[test]
    fn extremes() {
        let c = cfg(2, 5, 1);
        let p0 = build_components(&c, 0.0);
        assert_eq!(p0.num_components(), 25);
        assert!(p0.sorted_sizes().iter().all(|&s| s == 1));
        let p1 = build_components(&c, 1.0);
        assert_eq!(p1.sorted_sizes(), &[25]);
    }

    #[test]
    fn four_cycle_split() {
        // Find a seed whose weights open (0,1) and (2,3) strictly below the
        // other two, then pick p between.
        let seed = (0..)
            .find(|&s| {
                let w = cycle_weights(&cfg(1, 4, s));
                w[0].max(w[2]) < w[1].min(w[3])
            })
            .unwrap();
        let c = cfg(1, 4, seed);
        let w = cycle_weights(&c);
        let p = 0.5 * (w[0].max(w[2]) + w[1].min(w[3]));
        assert_eq!(sets(&build_components(&c, p)), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn triangle_sweep_counts() {
        let c = cfg(1, 3, 11);
        let mut w = cycle_weights(&c);
        w.sort_by(f64::total_cmp);
        let grid = [0.5 * w[0], 0.5 * (w[0] + w[1]), 0.5 * (w[1] + w[2])];
        let counts: Vec<usize> = sweep(&c, &grid, ThresholdRule::Absolute(1))
            .unwrap()
            .iter()
            .map(|s| s.num_components)
            .collect();
        assert_eq!(counts, vec![3, 2, 1]);
    }

    #[test]
    fn sweep_endpoints_and_monotonicity() {
        let c = cfg(2, 6, 4);
        let rows = sweep(&c, &[0.0, 1.0], ThresholdRule::Absolute(1)).unwrap();
        assert_eq!(rows[0].c1, 1);
        assert_eq!(rows[1].c1, 36);
        assert!(sweep(&c, &[], ThresholdRule::Absolute(1)).unwrap().is_empty());
        assert!(sweep(&c, &[0.5, 0.2], ThresholdRule::Absolute(1)).is_err());
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let rows = sweep(&c, &grid, ThresholdRule::Absolute(2)).unwrap();
        assert!(rows.windows(2).all(|w| w[0].c1 <= w[1].c1));
    }

    #[test]
    fn sweep_matches_direct_builds() {
        let grid: Vec<f64> = (0..=12).map(|i| 0.05 * i as f64).collect();
        for seed in 0..5 {
            let c = cfg(3, 4, seed);
            let parts = sweep_partitions(&c, &grid).unwrap();
            let chis = sweep_chi(&c, &grid).unwrap();
            for ((part, &p), chi) in parts.iter().zip(&grid).zip(chis) {
                let direct = build_components(&c, p);
                assert_eq!(part.sorted_sizes(), direct.sorted_sizes());
                assert_eq!(chi, direct.chi_hat());
            }
        }
    }

    #[test]
    fn moments_of_singletons() {
        let part = build_components(&cfg(2, 4, 0), 0.0);
        let m1 = cluster_moments(&part, 1);
        assert_eq!((m1.s[0], m1.s[1], m1.chi_hat), (16.0, 16.0, 1.0));
        let m2 = cluster_moments(&part, 2);
        assert_eq!(m2.s, [0.0; 4]);
        assert_eq!(m2.chi_hat, 1.0);
    }

    #[test]
    fn moments_of_three_two_one() {
        // Build sizes {3, 2, 1} on a 6-cycle by opening edges (0,1), (1,2), (3,4).
        let mut uf = UnionFind::new(6);
        uf.union(0, 1);
        uf.union(1, 2);
        uf.union(3, 4);
        let part = ComponentPartition::from_union_find(&mut uf, 0.5, |_| true, None);
        let mo = cluster_moments(&part, 2);
        assert_eq!(mo.s[1], 13.0);
        assert_eq!(mo.s[2], 35.0);
        assert!((mo.chi_hat - 14.0 / 6.0).abs() < 1e-15);
    }

    /// Seed for a 6-cycle where edges 0 and 3 are the two lightest, edge 1 is
    /// third, and p1 / p2 separate them from the rest.
    fn six_cycle_case() -> (CoupledConfiguration, f64, f64) {
        let seed = (0..)
            .find(|&s| {
                let w = cycle_weights(&cfg(1, 6, s));
                let lo = w[0].max(w[3]);
                let rest = [w[2], w[4], w[5]].into_iter().fold(f64::INFINITY, f64::min);
                lo < w[1] && w[1] < rest
            })
            .unwrap();
        let c = cfg(1, 6, seed);
        let w = cycle_weights(&c);
        let rest = [w[2], w[4], w[5]].into_iter().fold(f64::INFINITY, f64::min);
        (c.clone(), 0.5 * (w[0].max(w[3]) + w[1]), 0.5 * (w[1] + rest))
    }

    #[test]
    fn restricted_on_six_cycle() {
        let (c, p1, p2) = six_cycle_case();
        let r = restricted_components(&c, p1, p2, 2).unwrap();
        assert_eq!(sets(&r), vec![vec![0, 1], vec![3, 4]]);
        assert_eq!(sets(&build_components(&c, p2)), vec![vec![0, 1, 2], vec![3, 4], vec![5]]);
        assert_eq!(n_count(&c, p1, p2, 2).unwrap(), 6);
    }

    #[test]
    fn restricted_degenerate_cases() {
        let c = cfg(2, 6, 9);
        let same = restricted_components(&c, 0.4, 0.4, 3).unwrap();
        let direct = build_components(&c, 0.4);
        let mut big: Vec<u64> = direct.sorted_sizes().iter().copied().filter(|&s| s >= 3).collect();
        big.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(same.sorted_sizes(), &big[..]);
        let all = restricted_components(&c, 0.0, 0.45, 1).unwrap();
        assert_eq!(sets(&all), sets(&build_components(&c, 0.45)));
        assert_eq!(n_count(&c, 0.3, 0.3, 1).unwrap(), 0);
        // Everything connected at p2 = 1, every p1 = 0 cluster is a singleton.
        assert_eq!(n_count(&c, 0.0, 1.0, 2).unwrap(), 36 * 36);
        assert!(restricted_components(&c, 0.5, 0.4, 1).is_err());
    }

    #[test]
    fn threshold_rules() {
        assert_eq!(ThresholdRule::Absolute(7).resolve(100, 3.0), 7);
        assert_eq!(ThresholdRule::VolumeExponent(0.6).resolve(100_000, 3.0), 1000);
        assert_eq!(ThresholdRule::ChiFifthOverVolume.resolve(1000, 10.0), 100);
        assert_eq!(ThresholdRule::ChiFifthOverVolume.resolve(1000, 1.0), 1);
        assert!(ThresholdRule::VolumeExponent(0.7).validate().is_err());
        assert!(ThresholdRule::Absolute(0).validate().is_err());
        assert!(ThresholdRule::default().validate().is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn double_counting(seed in any::<u64>(), p in 0.0f64..1.0) {
                let c = cfg(2, 6, seed);
                let part = build_components(&c, p);
                prop_assert_eq!(part.participating(), 36);
                let per_vertex: u128 = (0..36)
                    .map(|v| part.sizes()[part.component_of(v).unwrap()] as u128)
                    .sum();
                prop_assert_eq!(part.sum_squares(), per_vertex);
                prop_assert!(part.sorted_sizes().windows(2).all(|w| w[0] >= w[1]));
                let mo = cluster_moments(&part, 1);
                prop_assert!(mo.chi_hat >= 1.0 && mo.chi_hat <= 36.0);
                prop_assert!(mo.s[1] <= 36.0 * mo.max_size as f64);
            }

            #[test]
            fn restricted_structure(seed in any::<u64>(), a in 0.0f64..0.6, b in 0.0f64..0.6, m in 1u64..6) {
                let (p1, p2) = if a <= b { (a, b) } else { (b, a) };
                let c = cfg(2, 6, seed);
                let lower = build_components(&c, p1);
                let upper = build_components(&c, p2);
                let r = restricted_components(&c, p1, p2, m).unwrap();
                let expect: u64 = lower.sizes().iter().filter(|&&s| s >= m).sum();
                prop_assert_eq!(r.participating(), expect);
                prop_assert!(r.sizes().iter().all(|&s| s >= m));
                for comp in r.members() {
                    let host = upper.component_of(comp[0]);
                    prop_assert!(comp.iter().all(|&v| upper.component_of(v) == host));
                }
                let nm = n_count(&c, p1, p2, m).unwrap();
                let nm1 = n_count(&c, p1, p2, m + 1).unwrap();
                prop_assert!(nm <= nm1);
            }
        }
    }
}
