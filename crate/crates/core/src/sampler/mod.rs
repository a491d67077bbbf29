//! Two-step training: SGD on the informed component with the nonlinear
//! groups frozen (phase 1), then stochastic gradient Langevin dynamics over
//! all parameters (phase 2), collecting a thinned posterior chain.

mod chain;
mod config;
mod diagnostics;
mod run;

pub use chain::{PosteriorChain, Snapshot, CHAIN_VERSION};
pub use config::{derive_seed, step_size, SgldConfig};
pub use diagnostics::effective_sample_size;
pub use run::{expected_chain_len, run_two_step, sgd_phase1, sgld_step, GroupGrads, Phase1Report};
