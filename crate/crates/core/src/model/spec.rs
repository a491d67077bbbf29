//! Architecture configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ConditionalLogit,
    FullyConnected,
    Proposed,
}

/// How the informed component uses the shared characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// gamma interacts with per-alternative embeddings (shared gamma vector).
    Embedding,
    /// Per-alternative gamma on raw characteristics with the base
    /// alternative's gamma fixed at zero.
    BaseZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub j: usize,
    pub k_x: usize,
    pub k_q: usize,
    /// Hidden width of the f, g and fully-connected networks.
    #[serde(default = "default_hidden_units")]
    pub hidden_units: usize,
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,
    /// Hidden width of the per-alternative embedding networks
    /// (defaults to 2 * k_q when absent).
    #[serde(default)]
    pub embed_hidden_units: Option<usize>,
    #[serde(default)]
    pub lambda_iia: f64,
    #[serde(default)]
    pub lambda_noniia: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_gamma_mode")]
    pub gamma_mode: GammaMode,
}

fn default_hidden_units() -> usize {
    512
}

fn default_hidden_layers() -> usize {
    2
}

fn default_gamma_mode() -> GammaMode {
    GammaMode::Embedding
}

impl ModelSpec {
    pub fn new(kind: ModelKind, j: usize, k_x: usize, k_q: usize) -> Self {
        ModelSpec {
            kind,
            j,
            k_x,
            k_q,
            hidden_units: default_hidden_units(),
            hidden_layers: default_hidden_layers(),
            embed_hidden_units: None,
            lambda_iia: 0.0,
            lambda_noniia: 0.0,
            weight_decay: 0.0,
            gamma_mode: GammaMode::Embedding,
        }
    }

    pub fn embed_units(&self) -> usize {
        self.embed_hidden_units.unwrap_or(2 * self.k_q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.j < 2 {
            return Err(Error::InvalidArgument("need at least 2 alternatives".into()));
        }
        if self.k_x < 1 || self.k_q < 1 {
            return Err(Error::InvalidArgument(
                "need at least one alternative attribute and one shared characteristic".into(),
            ));
        }
        if self.hidden_units < 1 || self.hidden_layers < 1 {
            return Err(Error::InvalidArgument(
                "hidden_units and hidden_layers must be at least 1".into(),
            ));
        }
        if self.lambda_iia < 0.0 || self.lambda_noniia < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::InvalidArgument(
                "regularization strengths must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Stable hash of the spec, embedded in chain files and result tables.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("spec serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        let out = h.finalize();
        out.iter().take(8).map(|b| format!("{:02x}", b)).collect()
    }
}
