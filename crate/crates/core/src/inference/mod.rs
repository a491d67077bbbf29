//! Everything computed from a posterior chain: Bayesian-model-average
//! predictions, input-gradient utilities, marginal rates of substitution,
//! value of travel time, credible intervals and bands, accuracy metrics,
//! and empirical coverage.

mod bands;
mod gradients;
mod intervals;
mod mrs;
mod predictive;

pub use bands::{utility_bands, UtilityBand};
pub use gradients::{
    chain_input_gradients, snapshot_bn, utility_input_gradient, utility_input_gradients,
};
pub use intervals::{empirical_coverage, equal_tailed_interval, quantile};
pub use mrs::{mrs, mrs_set, vott, MrsEstimate, VottSummary, MRS_DENOMINATOR_FLOOR};
pub use predictive::{balanced_accuracy, mean_log_likelihood, posterior_predictive, raw_accuracy};
