//! Error statistics for Monte Carlo batches.
//!
//! All values are in millimeters. The standard deviation uses the sample
//! (n - 1) form; percentiles interpolate linearly between order statistics.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot compute metrics over an empty sample")]
    EmptySample,
    #[error("total and per-axis samples differ in length ({total} vs {per_axis})")]
    LengthMismatch { total: usize, per_axis: usize },
}

/// One statistic evaluated for the total error and each world axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSplit {
    pub total: f64,
    pub per_axis: [f64; 3],
}

/// Summary statistics of a batch of position errors, in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// Mean position error.
    pub mpe: AxisSplit,
    /// Root mean square error.
    pub rmse: AxisSplit,
    /// Sample standard deviation.
    pub std: AxisSplit,
    /// Median error (50th percentile).
    pub cdf50: AxisSplit,
    /// 90th percentile error.
    pub cdf90: AxisSplit,
    /// Total-error samples sorted ascending, retained for CDF export.
    pub error_samples: Vec<f64>,
}

/// P-th percentile of an ascending-sorted sample by linear interpolation.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = (sorted.len() - 1) as f64 * (p / 100.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let w = h - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

fn summarize(values: &[f64]) -> (f64, f64, f64, Vec<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mean_sq = values.iter().map(|e| e * e).sum::<f64>() / n;
    let rmse = mean_sq.sqrt();
    let var = if values.len() > 1 {
        values.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("non-finite error sample"));
    (mean, rmse, var.sqrt(), sorted)
}

/// Computes the batch statistics from total errors and the matching
/// per-axis absolute errors (one `[x, y, z]` triple per sample), all in mm.
pub fn compute_metrics(
    errors: &[f64],
    per_axis_errors: &[[f64; 3]],
) -> Result<RunMetrics, MetricsError> {
    if errors.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    if errors.len() != per_axis_errors.len() {
        return Err(MetricsError::LengthMismatch {
            total: errors.len(),
            per_axis: per_axis_errors.len(),
        });
    }

    let (mpe_t, rmse_t, std_t, sorted_total) = summarize(errors);
    let mut axis_stats = [(0.0, 0.0, 0.0, 0.0, 0.0); 3];
    for (a, stats) in axis_stats.iter_mut().enumerate() {
        let axis: Vec<f64> = per_axis_errors.iter().map(|e| e[a]).collect();
        let (mpe, rmse, std, sorted) = summarize(&axis);
        *stats = (mpe, rmse, std, percentile(&sorted, 50.0), percentile(&sorted, 90.0));
    }
    let pick = |f: fn(&(f64, f64, f64, f64, f64)) -> f64| -> [f64; 3] {
        [f(&axis_stats[0]), f(&axis_stats[1]), f(&axis_stats[2])]
    };

    Ok(RunMetrics {
        mpe: AxisSplit { total: mpe_t, per_axis: pick(|s| s.0) },
        rmse: AxisSplit { total: rmse_t, per_axis: pick(|s| s.1) },
        std: AxisSplit { total: std_t, per_axis: pick(|s| s.2) },
        cdf50: AxisSplit {
            total: percentile(&sorted_total, 50.0),
            per_axis: pick(|s| s.3),
        },
        cdf90: AxisSplit {
            total: percentile(&sorted_total, 90.0),
            per_axis: pick(|s| s.4),
        },
        error_samples: sorted_total,
    })
}
