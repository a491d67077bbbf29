//! Minimal reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! The engine provides exactly the operator set the choice architectures
//! need. Gradients are available for any leaf — parameter leaves *and* input
//! leaves — because marginal-rate-of-substitution estimates differentiate
//! utilities with respect to input attributes.
//!
//! Tapes are rebuilt per batch and confined to a single worker; arrays are
//! immutable once written.

mod array;
mod tape;

pub use array::Array;
pub use tape::{batchnorm_stats_update, Gradients, LeafKind, NodeId, Tape, BATCHNORM_EPS};
