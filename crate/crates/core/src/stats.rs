//! Estimators and goodness-of-fit tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// A point estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Whether `target` lies within `k` standard errors.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

/// Number of batches used by [`batch_means`].
pub const BATCHES: usize = 10;

/// Sample mean and i.i.d. standard error.
pub fn mean_stderr(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate {
            value: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Estimate {
            value: mean,
            stderr: f64::NAN,
        };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Estimate {
        value: mean,
        stderr: (var / n as f64).sqrt(),
    }
}

/// Mean with a batch-means standard error over [`BATCHES`] contiguous batches,
/// which tolerates weak serial dependence. Falls back to the i.i.d. error for
/// fewer than `2·BATCHES` values.
pub fn batch_means(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n < 2 * BATCHES {
        return mean_stderr(xs);
    }
    let value = xs.iter().sum::<f64>() / n as f64;
    let means: Vec<f64> = (0..BATCHES)
        .map(|b| {
            let (lo, hi) = (b * n / BATCHES, (b + 1) * n / BATCHES);
            xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    Estimate {
        value,
        stderr: mean_stderr(&means).stderr,
    }
}

/// Asymptotic Kolmogorov distribution tail `P(K > λ)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = (-2.0 * j * j * lambda * lambda).exp();
        s += if j as i64 % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Result of a Kolmogorov–Smirnov test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Critical value of the statistic at level 1%.
    pub critical_1pct: f64,
}

impl KsResult {
    pub fn rejected_at_1pct(&self) -> bool {
        self.p_value < 0.01
    }
}

/// `c(0.01)` of the asymptotic Kolmogorov distribution.
const KS_C_1PCT: f64 = 1.627_624;

fn ks_result(d: f64, n_eff: f64) -> KsResult {
    let sq = n_eff.sqrt();
    // Stephens' small-sample correction
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_tail(lambda),
        critical_1pct: KS_C_1PCT / (sq + 0.12 + 0.11 / sq),
    }
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<KsResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InsufficientData("empty sample in K-S test".into()));
    }
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = a[i].min(b[j]);
        while i < n && a[i] <= v {
            i += 1;
        }
        while j < m && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n * m) as f64 / (n + m) as f64;
    Ok(ks_result(d, n_eff))
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample(x: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if x.is_empty() {
        return Err(Error::InsufficientData("empty sample in K-S test".into()));
    }
    let mut a = x.to_vec();
    a.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in a.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(ks_result(d, n))
}

/// Pearson χ² goodness of fit of `counts` against probabilities `probs`.
/// Cells with expected count below 5 are pooled. Returns `(statistic, p)`.
pub fn chi_square_gof(counts: &[usize], probs: &[f64]) -> Result<(f64, f64)> {
    if counts.len() != probs.len() {
        return Err(Error::Dimension {
            expected: probs.len(),
            got: counts.len(),
        });
    }
    let n: usize = counts.iter().sum();
    let nf = n as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        obs += c as f64;
        exp += p * nf;
        if exp >= 5.0 {
            cells.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 || obs > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => cells.push((obs, exp)),
        }
    }
    if cells.len() < 2 {
        return Err(Error::InsufficientData("fewer than two χ² cells".into()));
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dist = ChiSquared::new((cells.len() - 1) as f64)
        .map_err(|e| Error::InsufficientData(e.to_string()))?;
    Ok((stat, 1.0 - dist.cdf(stat)))
}

/// `Σ|f − g| w / Σ|g| w`.
pub fn normalized_l1(f: &[f64], g: &[f64], w: &[f64]) -> f64 {
    let num: f64 = f.iter().zip(g).zip(w).map(|((a, b), w)| (a - b).abs() * w).sum();
    let den: f64 = g.iter().zip(w).map(|(b, w)| b.abs() * w).sum();
    num / den
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Sample Pearson correlation.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use proptest::prelude::*;

    #[test]
    fn kolmogorov_critical_value() {
        assert!((kolmogorov_tail(KS_C_1PCT) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_tail(1.3581) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn ks_accepts_same_distribution_and_rejects_shift() {
        let mut r = StreamRng::new(1, 0);
        let x: Vec<f64> = (0..2000).map(|_| r.normal()).collect();
        let y: Vec<f64> = (0..2000).map(|_| r.normal()).collect();
        let z: Vec<f64> = (0..2000).map(|_| r.normal() + 0.3).collect();
        assert!(!ks_two_sample(&x, &y).unwrap().rejected_at_1pct());
        assert!(ks_two_sample(&x, &z).unwrap().rejected_at_1pct());
        let u: Vec<f64> = (0..2000).map(|_| r.uniform()).collect();
        assert!(!ks_one_sample(&u, |t| t.clamp(0.0, 1.0)).unwrap().rejected_at_1pct());
    }

    #[test]
    fn chi_square_uniform() {
        let mut r = StreamRng::new(2, 0);
        let mut counts = vec![0usize; 10];
        for _ in 0..10_000 {
            counts[(r.uniform() * 10.0) as usize] += 1;
        }
        let (_, p) = chi_square_gof(&counts, &[0.1; 10]).unwrap();
        assert!(p > 0.01);
        let (_, p) = chi_square_gof(&counts, &[0.05, 0.15, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]).unwrap();
        assert!(p < 0.01);
    }

    #[test]
    fn batch_means_of_constant() {
        let e = batch_means(&[2.0; 100]);
        assert_eq!(e.value, 2.0);
        assert_eq!(e.stderr, 0.0);
    }

    proptest! {
        #[test]
        fn ks_statistic_in_unit_interval(x in prop::collection::vec(-10.0f64..10.0, 1..50),
                                         y in prop::collection::vec(-10.0f64..10.0, 1..50)) {
            let r = ks_two_sample(&x, &y).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.statistic));
            prop_assert!((0.0..=1.0).contains(&r.p_value));
            let same = ks_two_sample(&x, &x).unwrap();
            prop_assert_eq!(same.statistic, 0.0);
        }

        #[test]
        fn batch_mean_equals_plain_mean(x in prop::collection::vec(-5.0f64..5.0, 20..200)) {
            let a = batch_means(&x).value;
            let b = mean_stderr(&x).value;
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
