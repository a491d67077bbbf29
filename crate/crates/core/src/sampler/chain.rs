//! Posterior chain container and its append-only JSON-lines persistence.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BnState, ModelSpec, ParameterSet};
use crate::sampler::config::SgldConfig;

pub const CHAIN_VERSION: u32 = 1;

/// One posterior draw: a parameter snapshot with its phase/epoch/step tags
/// and the batch-norm running statistics in force when it was taken.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub phase: u8,
    pub epoch: usize,
    pub step: usize,
    pub params: ParameterSet,
    pub bn: Option<BnState>,
}

/// Ordered sequence of post-burn-in, thinned parameter snapshots from one
/// SGLD run, with enough metadata to reproduce it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorChain {
    pub version: u32,
    pub seed: u64,
    pub model_spec: ModelSpec,
    pub spec_digest: String,
    pub config: SgldConfig,
    /// Terminal phase-1 epoch loss (None when phase 1 was skipped).
    pub phase1_final_loss: Option<f64>,
    pub phase1_epochs_run: usize,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    seed: u64,
    model_spec: ModelSpec,
    spec_digest: String,
    config: SgldConfig,
    phase1_final_loss: Option<f64>,
    phase1_epochs_run: usize,
}

impl PosteriorChain {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Write as JSON lines: one header line, then one line per snapshot.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header = Header {
            version: self.version,
            seed: self.seed,
            model_spec: self.model_spec.clone(),
            spec_digest: self.spec_digest.clone(),
            config: self.config.clone(),
            phase1_final_loss: self.phase1_final_loss,
            phase1_epochs_run: self.phase1_epochs_run,
        };
        serde_json::to_writer(&mut f, &header)?;
        f.write_all(b"\n")?;
        for s in &self.snapshots {
            serde_json::to_writer(&mut f, s)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Dataset("empty chain file".into()))??;
        let header: Header = serde_json::from_str(&header_line)?;
        if header.version != CHAIN_VERSION {
            return Err(Error::Version {
                what: "chain",
                found: header.version,
                expected: CHAIN_VERSION,
            });
        }
        let mut snapshots = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            snapshots.push(serde_json::from_str(&line)?);
        }
        Ok(PosteriorChain {
            version: header.version,
            seed: header.seed,
            model_spec: header.model_spec,
            spec_digest: header.spec_digest,
            config: header.config,
            phase1_final_loss: header.phase1_final_loss,
            phase1_epochs_run: header.phase1_epochs_run,
            snapshots,
        })
    }
}
