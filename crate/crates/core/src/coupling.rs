//! The simultaneous coupling of all percolation levels.
//!
//! Every edge carries a weight `U_e` in (0, 1) and `omega_p = {e : U_e <= p}`.
//! Weights are a stateless hash of `(seed, edge id)`, so no weight array is
//! ever stored and queries may come in any order.

use crate::lattice::{EdgeId, TorusSpec};
use crate::rng::{counter_u64, stream_key, unit_open};
use crate::{Error, Result};

/// Largest number of edges materialized by a sorted stream.
pub const DEFAULT_STREAM_CAP: u64 = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Resample {
    level: f64,
    key: u64,
}

#[derive(Debug, Clone)]
pub struct CoupledConfiguration {
    spec: TorusSpec,
    master_seed: u64,
    key: u64,
    resample: Option<Resample>,
}

impl CoupledConfiguration {
    pub fn new(spec: TorusSpec, master_seed: u64) -> Self {
        Self { spec, master_seed, key: stream_key(master_seed), resample: None }
    }

    pub fn spec(&self) -> &TorusSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.master_seed
    }

    /// A configuration with the same `omega_level` whose weights above
    /// `level` are redrawn from `seed`: edges with `U_e > level` get a fresh
    /// weight uniform on `(level, 1)`, which is exactly their conditional law.
    pub fn resampled_above(&self, level: f64, seed: u64) -> Self {
        Self {
            resample: Some(Resample { level, key: stream_key(seed ^ 0xA5A5_A5A5_5A5A_5A5A) }),
            ..self.clone()
        }
    }

    #[inline]
    pub fn weight(&self, e: EdgeId) -> f64 {
        let u = unit_open(counter_u64(self.key, e.0));
        match self.resample {
            Some(r) if u > r.level => r.level + (1.0 - r.level) * unit_open(counter_u64(r.key, e.0)),
            _ => u,
        }
    }

    #[inline]
    pub fn is_open(&self, e: EdgeId, p: f64) -> bool {
        self.weight(e) <= p
    }

    /// Every edge sorted by weight, ties broken by edge id.
    pub fn sorted_edge_stream(&self) -> Result<SortedEdgeStream> {
        self.sorted_edges_below(1.0, DEFAULT_STREAM_CAP)
    }

    /// The edges of `omega_{p_max}` sorted by weight. Edges heavier than the
    /// largest level of a sweep never change its snapshots, so sweeps only
    /// materialize this prefix of the full stream.
    pub fn sorted_edges_below(&self, p_max: f64, cap: u64) -> Result<SortedEdgeStream> {
        let total = self.spec.num_edges();
        let expected = (total as f64 * p_max.clamp(0.0, 1.0)).ceil() as u64;
        if expected > cap {
            return Err(Error::Resource {
                what: "sorted edge stream",
                requested: expected as u128,
                cap: cap as u128,
            });
        }
        let mut items: Vec<(f64, u64)> = Vec::with_capacity(expected as usize + 64);
        for e in 0..total {
            let w = self.weight(EdgeId(e));
            if w <= p_max {
                items.push((w, e));
            }
        }
        if items.len() as u64 > cap {
            return Err(Error::Resource {
                what: "sorted edge stream",
                requested: items.len() as u128,
                cap: cap as u128,
            });
        }
        items.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(SortedEdgeStream { items })
    }
}

#[derive(Debug, Clone)]
pub struct SortedEdgeStream {
    items: Vec<(f64, u64)>,
}

impl SortedEdgeStream {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EdgeId, f64)> + '_ {
        self.items.iter().map(|&(w, e)| (EdgeId(e), w))
    }
}

/// A pair of levels `p1 <= p2` between which edges are sprinkled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelPair {
    p1: f64,
    p2: f64,
}

impl LevelPair {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p2) || p1 > p2 {
            return Err(Error::InvalidArgument(format!("need 0 <= p1 <= p2 <= 1, got {p1}, {p2}")));
        }
        Ok(Self { p1, p2 })
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p2(&self) -> f64 {
        self.p2
    }

    /// Distances below a supplied critical point, `(p_c - p1, p_c - p2)`.
    pub fn epsilons(&self, p_c: f64) -> (f64, f64) {
        (p_c - self.p1, p_c - self.p2)
    }

    /// Probability that none of `k` edges closed at `p1` opens by `p2`.
    pub fn survival(&self, k: u64) -> f64 {
        sprinkle_survival(self.p1, self.p2, k).expect("levels validated at construction")
    }
}

/// `((1 - p2) / (1 - p1))^k`: the chance that none of `k` edges which are
/// closed at `p1` is open at `p2`.
pub fn sprinkle_survival(p1: f64, p2: f64, k: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p2) || p1 > p2 {
        return Err(Error::InvalidArgument(format!("need 0 <= p1 <= p2 <= 1, got {p1}, {p2}")));
    }
    if k == 0 {
        return Ok(1.0);
    }
    if p2 >= 1.0 {
        return Ok(0.0);
    }
    let ratio = (1.0 - p2) / (1.0 - p1);
    Ok(if k <= i32::MAX as u64 { ratio.powi(k as i32) } else { ratio.powf(k as f64) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_one_sample;
    use approx::assert_relative_eq;

    fn cfg(d: usize, n: usize, seed: u64) -> CoupledConfiguration {
        CoupledConfiguration::new(TorusSpec::nearest_neighbor(d, n).unwrap(), seed)
    }

    #[test]
    fn extreme_levels() {
        let c = cfg(2, 5, 1);
        assert!(c.spec().edges().all(|e| !c.is_open(e, 0.0)));
        assert!(c.spec().edges().all(|e| c.is_open(e, 1.0)));
    }

    #[test]
    fn deterministic_and_monotone() {
        let a = cfg(3, 4, 99);
        let b = cfg(3, 4, 99);
        for e in a.spec().edges() {
            assert_eq!(a.weight(e), b.weight(e));
            for (p1, p2) in [(0.4, 0.7), (0.1, 0.2), (0.5, 0.5)] {
                assert!(!a.is_open(e, p1) || a.is_open(e, p2));
            }
        }
    }

    #[test]
    fn weights_look_uniform() {
        let c = cfg(5, 10, 2024);
        let w: Vec<f64> = (0..100_000).map(|e| c.weight(EdgeId(e))).collect();
        let ks = ks_one_sample(&w, |x| x.clamp(0.0, 1.0));
        // Asymptotic 1% critical value 1.628 / sqrt(n).
        assert!(ks.statistic < 1.628 / (1e5f64).sqrt(), "KS {}", ks.statistic);
    }

    #[test]
    fn stream_is_sorted_and_complete() {
        let c = cfg(1, 3, 5);
        let s = c.sorted_edge_stream().unwrap();
        assert_eq!(s.len(), 3);
        let ws: Vec<f64> = s.iter().map(|(_, w)| w).collect();
        assert!(ws.windows(2).all(|p| p[0] <= p[1]));
        let min = c.spec().edges().map(|e| c.weight(e)).fold(f64::INFINITY, f64::min);
        assert_eq!(ws[0], min);
        let again: Vec<_> = c.sorted_edge_stream().unwrap().iter().collect();
        assert_eq!(again, s.iter().collect::<Vec<_>>());
    }

    #[test]
    fn stream_cap_is_enforced() {
        let c = cfg(3, 6, 1);
        assert!(matches!(c.sorted_edges_below(1.0, 100), Err(Error::Resource { .. })));
        assert!(c.sorted_edges_below(0.0, 100).unwrap().is_empty());
    }

    #[test]
    fn survival_values() {
        assert_eq!(sprinkle_survival(0.3, 0.6, 0).unwrap(), 1.0);
        assert_relative_eq!(sprinkle_survival(0.0, 0.5, 1).unwrap(), 0.5);
        assert_relative_eq!(sprinkle_survival(0.2, 0.6, 2).unwrap(), 0.25, max_relative = 1e-15);
        assert_eq!(sprinkle_survival(0.2, 1.0, 3).unwrap(), 0.0);
        assert!(sprinkle_survival(0.6, 0.2, 3).is_err());
        let lp = LevelPair::new(0.2, 0.6).unwrap();
        assert!(lp.survival(3) < lp.survival(2));
        assert_eq!(lp.epsilons(0.7), (0.7 - 0.2, 0.7 - 0.6));
        assert!(LevelPair::new(0.5, 0.4).is_err());
    }

    #[test]
    fn conditional_law_above_p1() {
        // Among edges closed at p1 the fraction open at p2 is (p2-p1)/(1-p1).
        let (p1, p2) = (0.3, 0.55);
        let mut closed = 0u64;
        let mut opened = 0u64;
        for seed in 0..200 {
            let c = cfg(2, 8, seed);
            for e in c.spec().edges() {
                if !c.is_open(e, p1) {
                    closed += 1;
                    opened += c.is_open(e, p2) as u64;
                }
            }
        }
        let want = (p2 - p1) / (1.0 - p1);
        let got = opened as f64 / closed as f64;
        let se = (want * (1.0 - want) / closed as f64).sqrt();
        assert!((got - want).abs() < 4.0 * se, "{got} vs {want} (se {se})");
    }

    #[test]
    fn resampling_keeps_lower_level() {
        let c = cfg(2, 6, 3);
        let r = c.resampled_above(0.4, 17);
        let mut changed = false;
        for e in c.spec().edges() {
            assert_eq!(c.is_open(e, 0.4), r.is_open(e, 0.4));
            if c.weight(e) <= 0.4 {
                assert_eq!(c.weight(e), r.weight(e));
            } else {
                assert!(r.weight(e) > 0.4);
                changed |= c.weight(e) != r.weight(e);
            }
        }
        assert!(changed);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn inclusion_of_open_sets(seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
                let (p1, p2) = if a <= b { (a, b) } else { (b, a) };
                let c = cfg(2, 5, seed);
                for e in c.spec().edges() {
                    prop_assert!(!c.is_open(e, p1) || c.is_open(e, p2));
                }
            }

            #[test]
            fn survival_is_monotone(p1 in 0.0f64..0.9, dp in 0.0f64..0.09, k in 0u64..50) {
                let p2 = p1 + dp;
                let s = sprinkle_survival(p1, p2, k).unwrap();
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert!(sprinkle_survival(p1, p2, k + 1).unwrap() <= s);
                prop_assert!(sprinkle_survival(p1, (p2 + 0.05).min(0.99), k).unwrap() <= s + 1e-15);
            }
        }
    }
}
