//! Small statistics toolkit used by the estimators and their checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Linear-interpolated quantile of an unsorted sample, `q` in [0, 1].
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    if s.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution,
/// `Q(z) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 z^2)`.
pub fn kolmogorov_sf(z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    if z < 1.18 {
        // Small-z form converges much faster there.
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * z * z)).exp();
        let s = (2.0 * std::f64::consts::PI).sqrt() / z * (y + y.powi(9) + y.powi(25) + y.powi(49));
        return (1.0 - s).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * z * z).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let sn = effective_n.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    KsResult { statistic: d, p_value: ks_p_value(d, n) }
}

/// Two-sample KS test; ties are handled by advancing both ECDFs together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    KsResult { statistic: d, p_value: ks_p_value(d, ne) }
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    ChiSquared::new(df).map(|c| 1.0 - c.cdf(x)).unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginFit {
    pub slope: f64,
    /// Coefficient of determination `1 - SS_res / SS_tot` with `SS_tot`
    /// taken about the weighted mean of `y`.
    pub r_squared: f64,
}

/// Weighted least squares for `y = slope * x` (no intercept).
pub fn fit_through_origin(x: &[f64], y: &[f64], w: &[f64]) -> OriginFit {
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, b), c)| c * a * b).sum();
    let sxx: f64 = x.iter().zip(w).map(|(a, c)| c * a * a).sum();
    let slope = sxy / sxx;
    let wsum: f64 = w.iter().sum();
    let ybar = y.iter().zip(w).map(|(b, c)| c * b).sum::<f64>() / wsum;
    let ss_res: f64 = x.iter().zip(y).zip(w).map(|((a, b), c)| c * (b - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().zip(w).map(|(b, c)| c * (b - ybar).powi(2)).sum();
    OriginFit { slope, r_squared: 1.0 - ss_res / ss_tot }
}

/// Ordinary least squares `y = a + b x`; returns `(a, b)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Kahan-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kolmogorov_reference_points() {
        // scipy.special.kolmogorov
        assert_relative_eq!(kolmogorov_sf(1.0), 0.26999967167735456, max_relative = 1e-7);
        assert_relative_eq!(kolmogorov_sf(2.0), 6.709252557796953e-4, max_relative = 1e-7);
        assert_relative_eq!(kolmogorov_sf(0.5), 0.9639452436648751, max_relative = 1e-7);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn two_sample_statistic_with_ties() {
        let r = ks_two_sample(&[1.0, 2.0, 2.0, 3.0], &[2.0]);
        assert_relative_eq!(r.statistic, 0.25);
        let r = ks_two_sample(&[0.3, 0.2, 0.25, 0.1, 0.9, 0.6], &[0.1, 0.8, 0.34, 0.09, 0.12, 0.81]);
        assert_relative_eq!(r.statistic, 1.0 / 3.0);
    }

    #[test]
    fn origin_fit_exact() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v).collect();
        let f = fit_through_origin(&x, &y, &[1.0; 4]);
        assert_relative_eq!(f.slope, 2.5, max_relative = 1e-14);
        assert_relative_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn chi_square_tail() {
        assert_relative_eq!(chi_square_sf(3.841458820694124, 1.0), 0.05, max_relative = 1e-6);
    }

    #[test]
    fn quantiles() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_relative_eq!(median(&xs), 2.5);
        assert_relative_eq!(quantile(&xs, 0.0), 1.0);
        assert_relative_eq!(quantile(&xs, 1.0), 4.0);
    }
}
