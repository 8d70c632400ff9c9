//! Excursions above the running minimum of `W(t) = B(t) + lambda t - t^2/2`
//! on an Euler grid.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::rng::seeded_rng;
use crate::{Error, Result};

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_TOL: f64 = 0.05;
pub const DEFAULT_MAX_HORIZON: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    Brownian,
    /// Drift only, for debugging.
    Off,
}

/// `W(i dt)` for `i = 0..=round(T / dt)`.
pub fn sample_path(lambda: f64, dt: f64, horizon: f64, seed: u64, noise: Noise) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(horizon >= dt) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and T >= dt, got {dt}, {horizon}")));
    }
    let steps = (horizon / dt).round() as usize;
    let mut rng = seeded_rng(seed);
    let sd = dt.sqrt();
    let mut b = 0.0;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(0.0);
    for i in 1..=steps {
        if noise == Noise::Brownian {
            b += sd * rng.sample::<f64, _>(StandardNormal);
        }
        let t = i as f64 * dt;
        out.push(b + lambda * t - 0.5 * t * t);
    }
    Ok(out)
}

/// Streaming excursion detector. A grid point is a zero of the reflected
/// process when it is at or below every earlier value; an excursion spans
/// from one zero to the next, the last one possibly left open.
#[derive(Debug, Clone)]
pub struct ExcursionTracker {
    dt: f64,
    min: f64,
    idx: u64,
    last_zero: u64,
    lengths: Vec<f64>,
}

impl ExcursionTracker {
    pub fn new(dt: f64) -> Self {
        Self { dt, min: 0.0, idx: 0, last_zero: 0, lengths: Vec::new() }
    }

    /// Feed the next grid value (the value at index 0 is the implicit 0).
    pub fn push(&mut self, w: f64) {
        self.idx += 1;
        if w <= self.min {
            self.min = w;
            if self.idx - self.last_zero > 1 {
                self.lengths.push((self.idx - self.last_zero) as f64 * self.dt);
            }
            self.last_zero = self.idx;
        }
    }

    /// Whether the current point is a zero of the reflected process.
    pub fn at_minimum(&self) -> bool {
        self.last_zero == self.idx
    }

    /// Descending lengths, closing an open final excursion at the last point.
    pub fn finish(mut self) -> Vec<f64> {
        if self.idx > self.last_zero {
            self.lengths.push((self.idx - self.last_zero) as f64 * self.dt);
        }
        self.lengths.sort_by(|a, b| b.total_cmp(a));
        self.lengths
    }
}

/// Descending excursion lengths of a path starting at 0.
pub fn excursion_lengths(path: &[f64], dt: f64) -> Vec<f64> {
    let mut tr = ExcursionTracker::new(dt);
    for &w in path.iter().skip(1) {
        tr.push(w);
    }
    tr.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcursionVector {
    pub lambda: f64,
    pub dt: f64,
    pub horizon: f64,
    pub lengths: Vec<f64>,
    /// Heuristic bound `1 / (T - lambda)` on the squared-length mass left
    /// beyond the horizon.
    pub truncation_mass_bound: f64,
}

impl ExcursionVector {
    pub fn largest(&self) -> f64 {
        self.lengths.first().copied().unwrap_or(0.0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.lengths.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Sample the descending excursion vector, extending the horizon until the
/// drift `lambda - t` is at most -2, `t >= max(2 lambda, 0)`, the tail bound
/// `1 / (t - lambda)` is at most `tol`, and the path sits at its running
/// minimum.
pub fn sample_zlambda(lambda: f64, dt: f64, seed: u64, tol: f64) -> Result<ExcursionVector> {
    sample_zlambda_capped(lambda, dt, seed, tol, DEFAULT_MAX_HORIZON)
}

pub fn sample_zlambda_capped(lambda: f64, dt: f64, seed: u64, tol: f64, max_horizon: f64) -> Result<ExcursionVector> {
    if !(tol > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("need tol > 0 and dt > 0, got {tol}, {dt}")));
    }
    let t_floor = (2.0 * lambda).max(0.0).max(lambda + 2.0).max(lambda + 1.0 / tol);
    let mut rng = seeded_rng(seed);
    let sd = dt.sqrt();
    let mut tr = ExcursionTracker::new(dt);
    let mut b = 0.0;
    let mut i: u64 = 0;
    loop {
        i += 1;
        b += sd * rng.sample::<f64, _>(StandardNormal);
        let t = i as f64 * dt;
        tr.push(b + lambda * t - 0.5 * t * t);
        if t >= t_floor && tr.at_minimum() {
            let horizon = t;
            return Ok(ExcursionVector {
                lambda,
                dt,
                horizon,
                lengths: tr.finish(),
                truncation_mass_bound: 1.0 / (horizon - lambda),
            });
        }
        if t > max_horizon {
            return Err(Error::Truncation { horizon: t, partial: tr.finish() });
        }
    }
}

/// Euclidean distance between two descending vectors after zero-padding.
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            let d = a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn drift_only_paths() {
        let p = sample_path(0.0, 0.01, 3.0, 0, Noise::Off).unwrap();
        assert!(p.windows(2).all(|w| w[1] < w[0]));
        assert_relative_eq!(p[300], -4.5, max_relative = 1e-12);
        let p = sample_path(2.0, 0.01, 4.0, 0, Noise::Off).unwrap();
        let argmax = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert_eq!(argmax, 200);
        assert!(sample_path(0.0, 0.0, 1.0, 0, Noise::Off).is_err());
    }

    #[test]
    fn increment_variance() {
        let dt = 1e-3;
        let p = sample_path(0.5, dt, 100.0, 42, Noise::Brownian).unwrap();
        let drift = sample_path(0.5, dt, 100.0, 42, Noise::Off).unwrap();
        let inc: Vec<f64> = (1..p.len()).map(|i| (p[i] - p[i - 1]) - (drift[i] - drift[i - 1])).collect();
        let n = inc.len() as f64;
        let var = inc.iter().map(|x| x * x).sum::<f64>() / n;
        // Var of x^2 for a normal is 2 dt^2.
        let se = (2.0 * dt * dt / n).sqrt();
        assert!((var - dt).abs() < 4.0 * se, "{var}");
    }

    #[test]
    fn hand_reflection() {
        assert_eq!(excursion_lengths(&[0.0, 1.0, 0.5, -0.5, 0.2, -1.0], 1.0), vec![3.0, 2.0]);
        assert_eq!(excursion_lengths(&[0.0, 1.0, 2.0, 3.0], 0.5), vec![1.5]);
        assert!(excursion_lengths(&[0.0, -1.0, -2.0], 1.0).is_empty());
    }

    #[test]
    fn sampled_vector_contract() {
        for seed in 0..5 {
            let z = sample_zlambda(0.5, 1e-3, seed, 0.1).unwrap();
            assert!(z.lengths.windows(2).all(|w| w[0] >= w[1]));
            assert!(z.lengths.iter().all(|&x| x > 0.0));
            assert!(z.lengths.iter().sum::<f64>() <= z.horizon + 1e-9);
            assert!(z.horizon >= 10.5);
            assert_eq!(z, sample_zlambda(0.5, 1e-3, seed, 0.1).unwrap());
        }
        assert!(matches!(
            sample_zlambda_capped(0.0, 1e-3, 1, 1e-3, 5.0),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn distances() {
        assert_eq!(l2_distance(&[3.0, 2.0], &[3.0, 2.0]), 0.0);
        assert_eq!(l2_distance(&[3.0, 2.0], &[3.0]), 2.0);
        assert_eq!(l2_distance(&[1.0], &[3.0, 2.0]), l2_distance(&[3.0, 2.0], &[1.0]));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn triangle_inequality(a in proptest::collection::vec(0.0f64..5.0, 0..6),
                                   b in proptest::collection::vec(0.0f64..5.0, 0..6),
                                   c in proptest::collection::vec(0.0f64..5.0, 0..6)) {
                prop_assert!(l2_distance(&a, &c) <= l2_distance(&a, &b) + l2_distance(&b, &c) + 1e-12);
            }

            #[test]
            fn lengths_fit_in_horizon(seed in any::<u64>(), lambda in -2.0f64..2.0) {
                let p = sample_path(lambda, 0.01, 5.0, seed, Noise::Brownian).unwrap();
                let l = excursion_lengths(&p, 0.01);
                prop_assert!(l.iter().sum::<f64>() <= 5.0 + 1e-9);
                prop_assert!(l.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }
}
