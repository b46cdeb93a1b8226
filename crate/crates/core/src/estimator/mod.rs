//! Tail-probability estimators, exponent regression and density diagnostics.

mod diagnostics;
mod regression;
mod tail;

pub use diagnostics::{
    density_diagnostic, kolmogorov_p_value, ks_normal_test, ks_statistic, sample_covariance, DensityDiagnostic,
    DensityMode, GridSpec, MIN_DIAGNOSTIC_SAMPLES,
};
pub use regression::{slope_regression, slope_regression_raw, SlopeFit};
pub use tail::{
    corollary3_estimate, direct_estimate_from_trials, direct_tail_estimate, rescaled_prefactor,
    splitting_tail_estimate, wilson_interval, with_workers, EstimatorMethod, Interval, SplittingPlan, TailEstimate,
    Trial, MIN_SPLITTING_BUDGET,
};
