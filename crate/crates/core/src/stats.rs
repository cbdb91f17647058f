//! Monte Carlo statistics: batch means, Kolmogorov–Smirnov tests, log-log fits.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Smallest batch count accepted for an error bar.
pub const MIN_BATCHES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchMeans {
    pub mean: f64,
    pub stderr: f64,
    pub n_batches: usize,
    pub n: usize,
}

/// Batch means over contiguous blocks of `values` (replica order).
///
/// Uses `n_batches` equal blocks; trailing values that do not fill a block
/// are dropped from the error bar but kept in the mean.
pub fn batch_means(values: &[f64], n_batches: usize) -> Result<BatchMeans> {
    if n_batches < MIN_BATCHES {
        return invalid(format!("need at least {MIN_BATCHES} batches, got {n_batches}"));
    }
    if values.len() < n_batches {
        return invalid(format!(
            "{} values cannot fill {n_batches} batches",
            values.len()
        ));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let size = n / n_batches;
    let bm: Vec<f64> = values
        .chunks_exact(size)
        .take(n_batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let bmean = bm.iter().sum::<f64>() / n_batches as f64;
    let var = bm.iter().map(|b| (b - bmean).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    Ok(BatchMeans {
        mean,
        stderr: (var / n_batches as f64).sqrt(),
        n_batches,
        n,
    })
}

/// Batch count used for `n` replicas: 10 when possible, never below 8.
pub fn default_batches(n: usize) -> usize {
    if n >= 10 {
        10
    } else {
        MIN_BATCHES
    }
}

/// Sample mean and naive standard error.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Kolmogorov survival function `Q(λ) = 2 Σ_{j≥1} (−1)^{j−1} e^{−2j²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        s += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let en = n.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_q((en + 0.12 + 0.11 / en) * d),
    }
}

/// Two-sample KS test.
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
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_q((en + 0.12 + 0.11 / en) * d),
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return invalid("log-log fit needs two or more paired points");
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return invalid("log-log fit needs positive values");
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_means_of_constant_blocks() {
        let v: Vec<f64> = (0..80).map(|i| (i / 10) as f64).collect();
        let b = batch_means(&v, 8).unwrap();
        assert!((b.mean - 3.5).abs() < 1e-12);
        // block means 0..7: sd √6, stderr √6/√8
        assert!((b.stderr - (6.0f64 / 8.0).sqrt()).abs() < 1e-12);
        assert!(batch_means(&v, 4).is_err());
        assert!(batch_means(&v[..5], 8).is_err());
    }

    #[test]
    fn kolmogorov_reference() {
        // Q(1.36) ≈ 0.0494, the classical 5% point
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 5e-4);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [0.1, 0.2, 0.4];
        let y: Vec<f64> = x.iter().map(|v: &f64| 7.0 * v.powi(3)).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 3.0).abs() < 1e-12);
    }
}
