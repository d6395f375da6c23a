//! Summary statistics over simulation results: load-balance dispersion,
//! effective-bandwidth estimates, and baseline/candidate comparisons.

use crate::sim::MetricsReport;
use thiserror::Error;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("migsim-core needs the `std` or `libm` feature for square roots");

fn sqrt(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.sqrt()
    }
    #[cfg(all(not(feature = "std"), feature = "libm"))]
    {
        libm::sqrt(x)
    }
}

/// Errors from statistics helpers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricsError {
    /// No values supplied.
    #[error("cannot summarize an empty sequence")]
    EmptyInput,
    /// A value was negative (counts and loads can never be).
    #[error("value at index {index} is negative")]
    NegativeValue {
        /// Position of the offending value.
        index: usize,
    },
    /// A value was NaN or infinite.
    #[error("value at index {index} is not finite")]
    NonFiniteValue {
        /// Position of the offending value.
        index: usize,
    },
    /// The mean was zero, so relative dispersion is undefined.
    #[error("mean is zero; coefficient of variation is undefined")]
    ZeroMean,
    /// A rate over zero elapsed cycles is undefined.
    #[error("cycle count is zero; bandwidth is undefined")]
    ZeroCycles,
    /// Clock rates must be positive and finite.
    #[error("clock rate must be positive and finite")]
    InvalidClock,
}

/// Population coefficient of variation: standard deviation divided by mean.
///
/// Inputs are non-negative loads (counts, cycle totals), so a zero mean means
/// every value is zero and the ratio is undefined. Uses the population
/// (divide-by-n) variance.
///
/// # Errors
///
/// [`MetricsError::EmptyInput`], [`MetricsError::NegativeValue`],
/// [`MetricsError::NonFiniteValue`], or [`MetricsError::ZeroMean`].
///
/// # Examples
///
/// ```
/// use migsim_core::metrics::coefficient_of_variation;
/// assert_eq!(coefficient_of_variation(&[2.0, 4.0]).unwrap(), 1.0 / 3.0);
/// ```
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    for (index, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(MetricsError::NonFiniteValue { index });
        }
        if v < 0.0 {
            return Err(MetricsError::NegativeValue { index });
        }
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return Err(MetricsError::ZeroMean);
    }
    let variance = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(sqrt(variance) / mean)
}

/// Effective memory bandwidth of one multiply, in MB/s (1 MB = 1e6 bytes).
///
/// The multiply moves, in 8-byte words: the row-extent array (`num_rows + 1`
/// words read twice per interior element is not modeled — each word counts
/// once), the column indices (`nnz`), the values (`nnz`), the gathered x
/// elements (`nnz`), and the result vector (`num_rows`). Total bytes are
/// divided by the wall time implied by `cycles` at `clock_hz`.
///
/// # Errors
///
/// [`MetricsError::ZeroCycles`] or [`MetricsError::InvalidClock`].
pub fn bandwidth_estimate(
    num_rows: usize,
    nnz: usize,
    cycles: u64,
    clock_hz: f64,
) -> Result<f64, MetricsError> {
    if cycles == 0 {
        return Err(MetricsError::ZeroCycles);
    }
    if !clock_hz.is_finite() || clock_hz <= 0.0 {
        return Err(MetricsError::InvalidClock);
    }
    let bytes = 8.0 * (2.0 * nnz as f64)
        + 8.0 * (num_rows as f64 + 1.0)
        + 8.0 * nnz as f64
        + 8.0 * num_rows as f64;
    let seconds = cycles as f64 / clock_hz;
    Ok(bytes / 1.0e6 / seconds)
}

/// Relative standing of a candidate run against a baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComparisonSummary {
    /// Baseline cycles over candidate cycles; above 1 means the candidate
    /// finished faster.
    pub cycle_ratio: f64,
    /// Baseline migrations over candidate migrations; above 1 means the
    /// candidate migrated less. When both are zero the runs tie at 1.0; when
    /// only the candidate reaches zero the ratio is infinite.
    pub migration_ratio: f64,
    /// Baseline dispersion minus candidate dispersion of per-nodelet memory
    /// instructions; positive means the candidate is better balanced. Absent
    /// when either run has no defined dispersion.
    pub cv_delta: Option<f64>,
}

/// Compares a candidate run to a baseline run of the same problem.
pub fn compare_reports(baseline: &MetricsReport, candidate: &MetricsReport) -> ComparisonSummary {
    let cycle_ratio = baseline.cycles as f64 / candidate.cycles as f64;
    let migration_ratio = match (baseline.total_migrations, candidate.total_migrations) {
        (0, 0) => 1.0,
        (b, 0) if b > 0 => f64::INFINITY,
        (b, c) => b as f64 / c as f64,
    };
    let cv_delta = match (baseline.mem_instr_cv, candidate.mem_instr_cv) {
        (Some(b), Some(c)) => Some(b - c),
        _ => None,
    };
    ComparisonSummary { cycle_ratio, migration_ratio, cv_delta }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn report_with(cycles: u64, migrations: u64, cv: Option<f64>) -> MetricsReport {
        MetricsReport {
            cycles,
            nodelets: Vec::new(),
            occupancy: Vec::new(),
            total_migrations: migrations,
            mem_instr_cv: cv,
            b: Vec::new(),
        }
    }

    #[test]
    fn dispersion_matches_hand_computation() {
        assert_eq!(coefficient_of_variation(&[2.0, 4.0]).unwrap(), 1.0 / 3.0);
        assert_eq!(coefficient_of_variation(&[5.0, 5.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn dispersion_rejects_bad_inputs() {
        assert_eq!(coefficient_of_variation(&[]), Err(MetricsError::EmptyInput));
        assert_eq!(
            coefficient_of_variation(&[1.0, -0.5]),
            Err(MetricsError::NegativeValue { index: 1 })
        );
        assert_eq!(
            coefficient_of_variation(&[1.0, f64::NAN]),
            Err(MetricsError::NonFiniteValue { index: 1 })
        );
        assert_eq!(coefficient_of_variation(&[0.0, 0.0]), Err(MetricsError::ZeroMean));
    }

    #[test]
    fn bandwidth_counts_words_once() {
        // 4x4 identity: 4 values + 4 x loads + 4 column indices = 12 words,
        // 5 row-extent words, 4 result words: 21 words = 168 bytes.
        let bw = bandwidth_estimate(4, 4, 150_000_000, 150.0e6).unwrap();
        assert_eq!(bw, 168.0 / 1.0e6);
        assert_eq!(bandwidth_estimate(4, 4, 0, 150.0e6), Err(MetricsError::ZeroCycles));
        assert_eq!(bandwidth_estimate(4, 4, 1, 0.0), Err(MetricsError::InvalidClock));
        assert_eq!(bandwidth_estimate(4, 4, 1, f64::NAN), Err(MetricsError::InvalidClock));
    }

    #[test]
    fn comparison_handles_zero_migration_runs() {
        let base = report_with(200, 40, Some(0.5));
        let cand = report_with(100, 0, Some(0.2));
        let summary = compare_reports(&base, &cand);
        assert_eq!(summary.cycle_ratio, 2.0);
        assert_eq!(summary.migration_ratio, f64::INFINITY);
        assert_eq!(summary.cv_delta, Some(0.3));

        let tie = compare_reports(&cand, &cand);
        assert_eq!(tie.migration_ratio, 1.0);
        assert_eq!(tie.cycle_ratio, 1.0);

        let no_cv = compare_reports(&report_with(10, 0, None), &cand);
        assert_eq!(no_cv.cv_delta, None);
        assert_eq!(no_cv.migration_ratio, 1.0);
    }

    proptest! {
        // Relative dispersion is invariant under positive rescaling.
        #[test]
        fn dispersion_is_scale_invariant(
            values in proptest::collection::vec(0.01f64..1.0e6, 2..40),
            scale in 0.001f64..1000.0,
        ) {
            let base = coefficient_of_variation(&values).unwrap();
            let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
            let rescaled = coefficient_of_variation(&scaled).unwrap();
            let tolerance = 1.0e-12 * base.max(1.0);
            prop_assert!((base - rescaled).abs() <= tolerance,
                "{base} vs {rescaled}");
        }

        // Swapping baseline and candidate negates the dispersion delta and
        // inverts the cycle ratio.
        #[test]
        fn comparison_is_antisymmetric(
            cycles_a in 1u64..1_000_000,
            cycles_b in 1u64..1_000_000,
            mig_a in 1u64..1_000_000,
            mig_b in 1u64..1_000_000,
            cv_a in 0.0f64..10.0,
            cv_b in 0.0f64..10.0,
        ) {
            let a = report_with(cycles_a, mig_a, Some(cv_a));
            let b = report_with(cycles_b, mig_b, Some(cv_b));
            let ab = compare_reports(&a, &b);
            let ba = compare_reports(&b, &a);
            prop_assert_eq!(ab.cv_delta.unwrap(), -ba.cv_delta.unwrap());
            prop_assert!((ab.cycle_ratio * ba.cycle_ratio - 1.0).abs() < 1.0e-9);
            prop_assert!((ab.migration_ratio * ba.migration_ratio - 1.0).abs() < 1.0e-9);
        }
    }
}
