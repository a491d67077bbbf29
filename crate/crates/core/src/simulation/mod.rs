//! The synthetic-data Monte Carlo study: data generation with known
//! parameters, the analytic truth oracle for marginal rates of
//! substitution, and the replication driver.

mod dgp;
mod monte_carlo;
mod truth;

pub use dgp::{generate_dataset, sample_ev1, DgpSpec, PhiSpec, SyntheticDataset};
pub use monte_carlo::{
    accuracy_table, coverage_table, model_kind_name, overall_average_coverage, run_monte_carlo,
    AccuracyRow, CoverageReport, CoverageRow, McConfig, ReplicationRow, REPORT_VERSION,
};
pub use truth::{h_gradient, h_value, true_mrs, true_utility_curve};
