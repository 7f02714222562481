//! Binomial intervals and small statistical helpers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    /// Half-width divided by `z`, the standard error implied by the interval.
    pub fn stderr(&self) -> f64 {
        (self.upper - self.lower) / (2.0 * Z95)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("no trials")]
    NoTrials,
    #[error("{failures} failures out of {trials} trials")]
    TooManyFailures { failures: u64, trials: u64 },
}

/// Failure fraction with its Wilson score 95% interval.
pub fn logical_error_rate(failures: u64, trials: u64) -> Result<Interval, StatsError> {
    if trials == 0 {
        return Err(StatsError::NoTrials);
    }
    if failures > trials {
        return Err(StatsError::TooManyFailures { failures, trials });
    }
    let n = trials as f64;
    let phat = failures as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = Z95 * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lower = if failures == 0 { 0.0 } else { (center - half).max(0.0) };
    let upper = if failures == trials { 1.0 } else { (center + half).min(1.0) };
    Ok(Interval { estimate: phat, lower, upper })
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Sample mean and unbiased variance; the variance is 0 for fewer than two values.
pub fn mean_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let (mean, var) = mean_variance(xs);
    (mean, (var / xs.len() as f64).sqrt())
}
