//! Statistical summaries and tests that turn samples into verdicts.

mod ks;
mod mixed;
mod rate;
mod summary;
mod weighted;

pub use ks::{kolmogorov_survival, ks_test, normal_cdf, KsResult, SampleSet, KS_MIN_SAMPLES};
pub use mixed::{standardize_mixed_normal, Standardized, VARIANCE_FLOOR};
pub use rate::{loglog_slope, rate_regression, RateFit, BOOTSTRAP_RESAMPLES, RATE_MIN_LEVELS, RATE_MIN_SAMPLES};
pub use summary::{
    compensated_sum, covariance, mean, mean_se, moments, variance_about, Estimate, Moments,
};
pub use weighted::{
    gauss_hermite, predict_independent, predict_mixed, weighted_limit_check, TestFn, Weight, WeightedCheck,
};
