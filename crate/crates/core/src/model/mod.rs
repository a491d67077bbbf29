//! The three choice architectures behind one interface: representative
//! utilities from (x, q), choice probabilities, and the penalized loss.
//!
//! - `conditional_logit`: the shallow linear-in-parameters baseline.
//! - `fully_connected`: a plain MLP over all attributes and characteristics.
//! - `proposed`: informed linear part plus per-alternative embeddings, a
//!   shared IIA network and a non-IIA network, each batch-normalized
//!   (non-affine) and scaled by `sigma_iia` / `sigma_noniia`, so the model
//!   collapses to the informed hypothesis when the scales vanish.

mod forward;
mod params;
mod spec;

pub use forward::{
    attach_loss, build_informed_utilities, build_loss, build_utilities, choice_probabilities,
    penalized_loss, predict_probabilities, ForwardGraph, LossGraph, Mode,
};
pub use params::{BnState, BnStats, FreezeMask, ParamClass, ParamGroup, ParameterSet};
pub use spec::{GammaMode, ModelKind, ModelSpec};
