//! Monte Carlo estimators against exact enumeration on tiny graphs.

use std::collections::HashMap;

use critperc::coalescent::er_oracle;
use critperc::components::restricted_components;
use critperc::coupling::CoupledConfiguration;
use critperc::diagrams::estimate_tau;
use critperc::lattice::TorusSpec;
use critperc::oracle::{exact_stats, exact_two_level, TinyGraph};
use critperc::rng::derive_seed;
use critperc::stats::mean_se;

#[test]
fn er_cluster_mean_matches_complete_graph() {
    let n = 4u64;
    let lambda = 0.5;
    let p = 1.0 / n as f64 + lambda * (n as f64).powf(-4.0 / 3.0);
    let exact = exact_stats(&TinyGraph::complete(n as usize).unwrap(), p, 1).unwrap().chi[0];
    let xs: Vec<f64> = (0..40_000)
        .map(|s| {
            let e = er_oracle(n, lambda, derive_seed(11, s)).unwrap();
            e.sizes.iter().map(|&c| (c * c) as f64).sum::<f64>() / n as f64
        })
        .collect();
    let (m, se) = mean_se(&xs);
    assert!((m - exact).abs() < 4.0 * se, "{m} vs {exact} (se {se})");
}

#[test]
fn restricted_law_matches_enumeration() {
    let spec = TorusSpec::nearest_neighbor(1, 4).unwrap();
    let g = TinyGraph::from_torus(&spec).unwrap();
    let (p1, p2, m) = (0.3, 0.6, 2);
    let exact = exact_two_level(&g, p1, p2, m).unwrap();
    let reps = 50_000u64;
    let mut counts: HashMap<Vec<u64>, u64> = HashMap::new();
    for r in 0..reps {
        let cfg = CoupledConfiguration::new(spec.clone(), derive_seed(12, r));
        *counts.entry(restricted_components(&cfg, p1, p2, m).unwrap().sorted_sizes().to_vec()).or_default() += 1;
    }
    let mut covered = 0.0;
    for (sizes, prob) in &exact.restricted_law {
        let f = counts.get(sizes).copied().unwrap_or(0) as f64 / reps as f64;
        let se = (prob * (1.0 - prob) / reps as f64).sqrt();
        assert!((f - prob).abs() <= 4.0 * se + 1e-12, "{sizes:?}: {f} vs {prob}");
        covered += prob;
    }
    assert!((covered - 1.0).abs() < 1e-12);
    assert!(counts.keys().all(|k| exact.restricted_law.iter().any(|(s, _)| s == k)));
}

#[test]
fn two_point_field_matches_connection_probabilities() {
    let spec = TorusSpec::nearest_neighbor(1, 4).unwrap();
    let exact = exact_stats(&TinyGraph::from_torus(&spec).unwrap(), 0.6, 1).unwrap();
    let field = estimate_tau(&spec, 0.6, 50_000, 13).unwrap();
    assert_eq!(field.tau[0], 1.0);
    for x in 1..4 {
        let want = exact.connect[0][x];
        assert!((field.tau[x] - want).abs() < 4.0 * field.se[x], "x = {x}: {} vs {want}", field.tau[x]);
    }
    assert!((field.mass() - field.tau.iter().sum::<f64>()).abs() < 1e-12);
}
