//! Choice datasets: schema-driven wide-CSV ingestion, standardization,
//! deterministic splits, and minibatching.

mod dataset;
mod schema;
pub mod synthetic;

pub use dataset::{
    apply_standardization, invert_standardization, minibatches, split, split_indices, standardize,
    ChoiceDataset, ColumnKind, ColumnStats, DatasetMeta, Standardization,
};
pub use schema::{load_wide_csv, write_wide_csv, AttributeSpec, Schema, SharedSpec};
