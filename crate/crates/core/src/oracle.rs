//! Exact expectations on tiny graphs by enumerating every configuration.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::lattice::TorusSpec;
use crate::stats::KahanSum;
use crate::unionfind::UnionFind;
use crate::{Error, Result};

pub const MAX_VERTICES: usize = 24;
pub const MAX_EDGES: usize = 16;
/// Edge cap for the three-class enumeration (3^12 = 531441 configurations).
pub const MAX_TWO_LEVEL_EDGES: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TinyGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl TinyGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n > MAX_VERTICES || edges.len() > MAX_EDGES {
            return Err(Error::Resource {
                what: "tiny graph",
                requested: n.max(edges.len()) as u128,
                cap: MAX_EDGES.min(MAX_VERTICES) as u128,
            });
        }
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in &edges {
            if a == b || a >= n || b >= n || !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidArgument(format!("edge ({a}, {b}) breaks simplicity")));
            }
        }
        Ok(Self { n, edges })
    }

    /// Edge `i` is the torus edge with id `i`, so enumerated configurations
    /// line up with lattice weights.
    pub fn from_torus(spec: &TorusSpec) -> Result<Self> {
        let edges = spec
            .edges()
            .map(|e| {
                let (a, b) = spec.endpoints(e);
                (a.0, b.0)
            })
            .collect();
        Self::new(spec.volume() as usize, edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let edges = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        Self::new(n, edges)
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    fn partition(&self, open: impl Fn(usize) -> bool) -> (Vec<usize>, Vec<u64>) {
        let mut uf = UnionFind::new(self.n);
        for (i, &(a, b)) in self.edges.iter().enumerate() {
            if open(i) {
                uf.union(a, b);
            }
        }
        let roots: Vec<usize> = (0..self.n).map(|v| uf.find(v)).collect();
        let sizes = roots.iter().map(|&r| uf.size_of_root(r) as u64).collect();
        (roots, sizes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactStats {
    /// `E|C(v)|` per vertex.
    pub chi: Vec<f64>,
    /// `E|C(v)|^2` per vertex.
    pub cluster_sq: Vec<f64>,
    /// `E sum_{a,b} Delta_ab^2` over ordered pairs of clusters of size >= M.
    pub delta_frob2: f64,
    /// `P(u <-> v)`.
    pub connect: Vec<Vec<f64>>,
}

fn weight(p: f64, open: u32, closed: u32) -> f64 {
    p.powi(open as i32) * (1.0 - p).powi(closed as i32)
}

/// Exact single-level statistics with threshold `m` for the `Delta` term.
pub fn exact_stats(g: &TinyGraph, p: f64, m: u64) -> Result<ExactStats> {
    let e = g.edges.len();
    let n = g.n;
    let mut chi = vec![KahanSum::default(); n];
    let mut sq = vec![KahanSum::default(); n];
    let mut frob = KahanSum::default();
    let mut conn = vec![vec![KahanSum::default(); n]; n];
    for mask in 0u32..(1u32 << e) {
        let open = mask.count_ones();
        let w = weight(p, open, e as u32 - open);
        let (roots, sizes) = g.partition(|i| mask >> i & 1 == 1);
        for v in 0..n {
            chi[v].add(w * sizes[v] as f64);
            sq[v].add(w * (sizes[v] * sizes[v]) as f64);
            for u in 0..n {
                if roots[u] == roots[v] {
                    conn[v][u].add(w);
                }
            }
        }
        let mut delta: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for (i, &(a, b)) in g.edges.iter().enumerate() {
            let (ra, rb) = (roots[a], roots[b]);
            if mask >> i & 1 == 0 && ra != rb && sizes[a] >= m && sizes[b] >= m {
                *delta.entry((ra.min(rb), ra.max(rb))).or_default() += 1;
            }
        }
        frob.add(w * 2.0 * delta.values().map(|&d| (d * d) as f64).sum::<f64>());
    }
    Ok(ExactStats {
        chi: chi.iter().map(KahanSum::value).collect(),
        cluster_sq: sq.iter().map(KahanSum::value).collect(),
        delta_frob2: frob.value(),
        connect: conn.iter().map(|row| row.iter().map(KahanSum::value).collect()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoLevelReport {
    pub configurations: u64,
    /// `E|N(p1, p2; M)|`, ordered pairs.
    pub expected_n: f64,
    /// Configurations where the identity and the path definition disagree.
    pub mismatches: u64,
    /// Law of the sorted restricted-component sizes.
    pub restricted_law: Vec<(Vec<u64>, f64)>,
    /// Law of the set of large-cluster pairs joined by a sprinkled edge,
    /// pairs named by their smallest vertices.
    pub sprinkled_law: Vec<(Vec<(usize, usize)>, f64)>,
    /// `E #joined pairs` from the enumeration.
    pub joined_pairs: f64,
    /// `E sum_{pairs} (1 - ((1-p2)/(1-p1))^Delta)`, equal to `joined_pairs`
    /// when sprinkled edges are conditionally independent with that law.
    pub joined_pairs_formula: f64,
}

/// Every edge takes one of three classes: open at `p1`, opened by `p2`, or
/// closed at `p2`. Counts `N` both through the squared-size identity and by
/// searching simple paths that avoid small `p1`-clusters.
pub fn exact_two_level(g: &TinyGraph, p1: f64, p2: f64, m: u64) -> Result<TwoLevelReport> {
    let e = g.edges.len();
    if e > MAX_TWO_LEVEL_EDGES {
        return Err(Error::Resource { what: "three-class enumeration", requested: e as u128, cap: MAX_TWO_LEVEL_EDGES as u128 });
    }
    if !(0.0 <= p1 && p1 <= p2 && p2 <= 1.0) {
        return Err(Error::InvalidArgument(format!("need 0 <= p1 <= p2 <= 1, got {p1}, {p2}")));
    }
    let total = 3u64.pow(e as u32);
    let class_p = [p1, p2 - p1, 1.0 - p2];
    let ratio = if p1 < 1.0 { (1.0 - p2) / (1.0 - p1) } else { 1.0 };

    struct Acc {
        n: KahanSum,
        mismatches: u64,
        restricted: BTreeMap<Vec<u64>, KahanSum>,
        sprinkled: BTreeMap<Vec<(usize, usize)>, KahanSum>,
        joined: KahanSum,
        formula: KahanSum,
    }
    let empty = || Acc {
        n: KahanSum::default(),
        mismatches: 0,
        restricted: BTreeMap::new(),
        sprinkled: BTreeMap::new(),
        joined: KahanSum::default(),
        formula: KahanSum::default(),
    };
    let acc = (0..total)
        .into_par_iter()
        .fold(empty, |mut acc, code| {
            let mut classes = vec![0u8; e];
            let mut c = code;
            let mut w = 1.0;
            for slot in classes.iter_mut() {
                *slot = (c % 3) as u8;
                c /= 3;
                w *= class_p[*slot as usize];
            }
            let (r1, s1) = g.partition(|i| classes[i] == 0);
            let (_, s2) = g.partition(|i| classes[i] <= 1);
            let large: Vec<bool> = s1.iter().map(|&s| s >= m).collect();
            // Restricted components: p2-open edges between large vertices.
            let mut uf = UnionFind::new(g.n);
            for (i, &(a, b)) in g.edges.iter().enumerate() {
                if classes[i] <= 1 && large[a] && large[b] {
                    uf.union(a, b);
                }
            }
            let mut rsizes: Vec<u64> = (0..g.n).filter(|&v| large[v] && uf.is_root(v)).map(|v| uf.size_of_root(v) as u64).collect();
            rsizes.sort_unstable_by(|a, b| b.cmp(a));
            let identity: u64 = (0..g.n).map(|v| s2[v]).sum::<u64>() - rsizes.iter().map(|s| s * s).sum::<u64>();
            let direct = direct_n(g, &classes, &large);
            if identity != direct {
                acc.mismatches += 1;
            }
            acc.n.add(w * identity as f64);
            acc.restricted.entry(rsizes).or_default().add(w);

            // Sprinkled edges between distinct large p1-clusters.
            let anchor = |v: usize| (0..g.n).find(|&u| r1[u] == r1[v]).unwrap();
            let mut delta: BTreeMap<(usize, usize), (u64, bool)> = BTreeMap::new();
            for (i, &(a, b)) in g.edges.iter().enumerate() {
                if classes[i] == 0 || r1[a] == r1[b] || !large[a] || !large[b] {
                    continue;
                }
                let (x, y) = (anchor(a), anchor(b));
                let slot = delta.entry((x.min(y), x.max(y))).or_default();
                slot.0 += 1;
                slot.1 |= classes[i] == 1;
            }
            let joined: Vec<(usize, usize)> = delta.iter().filter(|(_, v)| v.1).map(|(k, _)| *k).collect();
            acc.joined.add(w * joined.len() as f64);
            acc.formula.add(w * delta.values().map(|v| 1.0 - ratio.powi(v.0 as i32)).sum::<f64>());
            acc.sprinkled.entry(joined).or_default().add(w);
            acc
        })
        .reduce(empty, |mut a, b| {
            a.n.add(b.n.value());
            a.mismatches += b.mismatches;
            for (k, v) in b.restricted {
                a.restricted.entry(k).or_default().add(v.value());
            }
            for (k, v) in b.sprinkled {
                a.sprinkled.entry(k).or_default().add(v.value());
            }
            a.joined.add(b.joined.value());
            a.formula.add(b.formula.value());
            a
        });
    Ok(TwoLevelReport {
        configurations: total,
        expected_n: acc.n.value(),
        mismatches: acc.mismatches,
        restricted_law: acc.restricted.into_iter().map(|(k, v)| (k, v.value())).collect(),
        sprinkled_law: acc.sprinkled.into_iter().map(|(k, v)| (k, v.value())).collect(),
        joined_pairs: acc.joined.value(),
        joined_pairs_formula: acc.formula.value(),
    })
}

/// Ordered pairs `(x, y)` joined by some `p2`-open path, every one of which
/// passes through a vertex of a small `p1`-cluster.
fn direct_n(g: &TinyGraph, classes: &[u8], large: &[bool]) -> u64 {
    let mut adj = vec![Vec::new(); g.n];
    for (i, &(a, b)) in g.edges.iter().enumerate() {
        if classes[i] <= 1 {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut count = 0;
    for x in 0..g.n {
        for y in 0..g.n {
            let mut on_path = vec![false; g.n];
            let mut connected = false;
            let mut clean = false;
            simple_paths(&adj, x, y, large, &mut on_path, true, &mut connected, &mut clean);
            if connected && !clean {
                count += 1;
            }
        }
    }
    count
}

/// Depth-first enumeration of simple paths from `v` to `target`, recording
/// whether any exists and whether any avoids small vertices entirely.
#[allow(clippy::too_many_arguments)]
fn simple_paths(
    adj: &[Vec<usize>],
    v: usize,
    target: usize,
    large: &[bool],
    on_path: &mut [bool],
    clean_so_far: bool,
    connected: &mut bool,
    clean: &mut bool,
) {
    let clean_here = clean_so_far && large[v];
    if v == target {
        *connected = true;
        *clean |= clean_here;
        return;
    }
    if *clean {
        return;
    }
    on_path[v] = true;
    for &u in &adj[v] {
        if !on_path[u] {
            simple_paths(adj, u, target, large, on_path, clean_here, connected, clean);
        }
    }
    on_path[v] = false;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ring(n: usize) -> TinyGraph {
        TinyGraph::from_torus(&TorusSpec::nearest_neighbor(1, n).unwrap()).unwrap()
    }

    #[test]
    fn triangle_values() {
        let s = exact_stats(&ring(3), 0.5, 1).unwrap();
        assert_relative_eq!(s.chi[0], 2.25, max_relative = 1e-14);
        assert_relative_eq!(s.connect[0][1], 0.625, max_relative = 1e-14);
        let s0 = exact_stats(&ring(4), 0.0, 1).unwrap();
        assert!(s0.chi.iter().all(|&c| c == 1.0));
        let s1 = exact_stats(&ring(4), 1.0, 1).unwrap();
        assert!(s1.chi.iter().all(|&c| c == 4.0));
    }

    #[test]
    fn limits_are_enforced() {
        assert!(TinyGraph::new(3, vec![(0, 1), (1, 0)]).is_err());
        assert!(TinyGraph::new(3, vec![(0, 0)]).is_err());
        assert!(TinyGraph::complete(7).is_err());
        let g = TinyGraph::new(14, (0..13).map(|i| (i, i + 1)).collect()).unwrap();
        assert!(matches!(exact_two_level(&g, 0.1, 0.2, 1), Err(Error::Resource { .. })));
    }

    #[test]
    fn equal_levels_give_empty_n() {
        let r = exact_two_level(&ring(4), 0.4, 0.4, 1).unwrap();
        assert_eq!(r.mismatches, 0);
        assert!(r.expected_n.abs() < 1e-14);
    }

    #[test]
    fn single_edge() {
        // Both endpoints are singletons at p1 = 0 and small for M = 2, so every
        // connected ordered pair counts: 2 diagonal pairs always, plus 2 more
        // when the edge is open at p2.
        let g = TinyGraph::new(2, vec![(0, 1)]).unwrap();
        let q = 0.3;
        let r = exact_two_level(&g, 0.0, q, 2).unwrap();
        assert_relative_eq!(r.expected_n, 2.0 + 2.0 * q, max_relative = 1e-14);
        assert_eq!(r.mismatches, 0);
    }

    #[test]
    fn four_cycle_identity_everywhere() {
        let r = exact_two_level(&ring(4), 0.3, 0.6, 2).unwrap();
        assert_eq!(r.configurations, 81);
        assert_eq!(r.mismatches, 0);
        let total: f64 = r.restricted_law.iter().map(|(_, w)| w).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
        assert_relative_eq!(r.joined_pairs, r.joined_pairs_formula, max_relative = 1e-12);
    }

    #[test]
    fn other_small_graphs() {
        let bowtie = TinyGraph::new(5, vec![(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 2)]).unwrap();
        for g in [bowtie, TinyGraph::complete(4).unwrap(), ring(8)] {
            for m in 1..=3 {
                let r = exact_two_level(&g, 0.25, 0.55, m).unwrap();
                assert_eq!(r.mismatches, 0);
                assert!(r.joined_pairs <= r.joined_pairs_formula + 1e-12);
                assert_relative_eq!(r.joined_pairs, r.joined_pairs_formula, max_relative = 1e-12, epsilon = 1e-15);
            }
        }
    }
}
