//! Monte Carlo propagation of minimizers through the parameter box, kernel
//! density estimates of the resulting distributions, and convergence
//! statistics against re-solved reference minimizers.

mod kde;
mod study;

pub use kde::{kde, silverman_bandwidth, DensityEstimate, DensitySelector, GridSpec, MIN_KDE_SAMPLES};
pub use study::{
    per_sample_errors, propagate_samples, propagate_study, sensitivity_log, summary_errors, ConvergenceReport,
    MarchOutcome, OracleOutcome, SampleRecord, SampleStatus, SampleStudy, SensitivityRow, Statistic, StudyConfig,
};

/// Least-squares slope of `log e` against `log h`.
///
/// Points with a non-positive or non-finite error or step are skipped; at
/// least three usable points with distinct steps are needed.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(h, e)| h.is_finite() && *h > 0.0 && e.is_finite() && *e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if logs.len() < 3 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= f64::EPSILON * n * (1.0 + mx * mx) {
        return None;
    }
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn slope_needs_three_points() {
        assert_eq!(loglog_slope(&[(1.0, 1.0), (0.5, 0.5)]), None);
        assert_eq!(
            loglog_slope(&[(1.0, 1.0), (0.5, 0.0), (0.25, f64::NAN), (0.1, 0.1)]),
            None
        );
        assert_eq!(loglog_slope(&[(0.5, 1.0), (0.5, 2.0), (0.5, 3.0)]), None);
    }

    proptest! {
        #[test]
        fn recovers_power_laws(c in 1e-6f64..1e3, p in -1.0f64..4.0) {
            let pts: Vec<(f64, f64)> = [1.0, 0.5, 0.25, 0.125, 0.0625].iter().map(|&h: &f64| (h, c * h.powf(p))).collect();
            let s = loglog_slope(&pts).unwrap();
            prop_assert!((s - p).abs() < 1e-10);
        }
    }
}
