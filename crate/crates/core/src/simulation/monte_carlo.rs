//! Replication driver: fit every model on every simulated dataset, collect
//! MRS credible intervals, truth hits, and holdout accuracy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Array;
use crate::data::split;
use crate::error::{Error, Result};
use crate::inference::{
    balanced_accuracy, mean_log_likelihood, mrs_set, posterior_predictive, raw_accuracy,
};
use crate::model::{ModelKind, ModelSpec};
use crate::sampler::{derive_seed, run_two_step, SgldConfig};
use crate::simulation::dgp::{generate_dataset, DgpSpec};
use crate::simulation::truth::true_mrs;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McConfig {
    pub dgp: DgpSpec,
    pub models: Vec<ModelSpec>,
    /// Sampler template; each (replication, model) job derives its own seed.
    pub sampler: SgldConfig,
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Input draws for the truth oracle's Monte Carlo average.
    #[serde(default = "default_truth_draws")]
    pub truth_draws: usize,
    /// Abort when more than this fraction of jobs fail.
    #[serde(default = "default_max_failures")]
    pub max_failure_fraction: f64,
}

fn default_holdout() -> f64 {
    0.2
}

fn default_level() -> f64 {
    0.95
}

fn default_truth_draws() -> usize {
    1_000_000
}

fn default_max_failures() -> f64 {
    0.2
}

/// One (replication, model) outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub model: usize,
    /// Equal-tailed intervals per numerator attribute (in report order).
    pub intervals: Vec<(f64, f64)>,
    pub points: Vec<f64>,
    pub hits: Vec<bool>,
    pub balanced_accuracy: f64,
    pub raw_accuracy: f64,
    pub mean_log_lik: f64,
    pub chain_len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub version: u32,
    pub level: f64,
    pub dgp: DgpSpec,
    pub models: Vec<ModelSpec>,
    /// Numerator attributes (0-based); the denominator is attribute 0.
    pub numerator_attrs: Vec<usize>,
    pub truths: Vec<f64>,
    pub rows: Vec<ReplicationRow>,
    /// (replication, model, error) for failed jobs.
    pub failures: Vec<(usize, usize, String)>,
}

/// Aggregated empirical coverage per model: one fraction per MRS plus the
/// row average.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageRow {
    pub model: String,
    pub dataset_size: usize,
    pub per_mrs: Vec<f64>,
    pub average: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub model: String,
    pub dataset_size: usize,
    pub balanced_accuracy: f64,
    pub raw_accuracy: f64,
}

pub fn model_kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::ConditionalLogit => "conditional_logit",
        ModelKind::FullyConnected => "fully_connected",
        ModelKind::Proposed => "proposed",
    }
}

/// Run the full study. Jobs fan out over the rayon pool; results merge in
/// (replication, model) order so output is deterministic regardless of
/// scheduling.
pub fn run_monte_carlo(cfg: &McConfig) -> Result<CoverageReport> {
    cfg.dgp.validate()?;
    cfg.sampler.validate()?;
    if cfg.models.is_empty() {
        return Err(Error::Config("no models configured".into()));
    }
    let numerator_attrs: Vec<usize> = (1..cfg.dgp.k_x).collect();
    let truths: Result<Vec<f64>> = numerator_attrs
        .iter()
        .map(|&l| true_mrs(&cfg.dgp, 0, l, cfg.truth_draws))
        .collect();
    let truths = truths?;

    let jobs: Vec<(usize, usize)> = (0..cfg.dgp.d)
        .flat_map(|r| (0..cfg.models.len()).map(move |m| (r, m)))
        .collect();
    let outcomes: Vec<std::result::Result<ReplicationRow, (usize, usize, String)>> = jobs
        .par_iter()
        .map(|&(rep, midx)| {
            run_one(cfg, rep, midx, &numerator_attrs, &truths)
                .map_err(|e| (rep, midx, e.to_string()))
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => rows.push(r),
            Err(f) => failures.push(f),
        }
    }
    if failures.len() as f64 > cfg.max_failure_fraction * jobs.len() as f64 {
        return Err(Error::ReplicationFailures {
            failed: failures.len(),
            total: jobs.len(),
        });
    }
    rows.sort_by_key(|r| (r.replication, r.model));
    Ok(CoverageReport {
        version: REPORT_VERSION,
        level: cfg.level,
        dgp: cfg.dgp.clone(),
        models: cfg.models.clone(),
        numerator_attrs,
        truths,
        rows,
        failures,
    })
}

fn run_one(
    cfg: &McConfig,
    rep: usize,
    midx: usize,
    numerators: &[usize],
    truths: &[f64],
) -> Result<ReplicationRow> {
    let sim = generate_dataset(&cfg.dgp, rep)?;
    let (train, test) = split(
        &sim.data,
        cfg.holdout_fraction,
        derive_seed(cfg.dgp.seed, 0x5911 + rep as u64),
    )?;
    let mut job_cfg = cfg.sampler.clone();
    job_cfg.seed = derive_seed(
        cfg.sampler.seed,
        0xC0DE + (rep * cfg.models.len() + midx) as u64,
    );
    let spec = &cfg.models[midx];
    let chain = run_two_step(spec, &train, &job_cfg)?;

    let ests = mrs_set(&chain, &test, 0, numerators, cfg.level)?;
    let intervals: Vec<(f64, f64)> = ests.iter().map(|e| e.interval).collect();
    let points: Vec<f64> = ests.iter().map(|e| e.point).collect();
    let hits: Vec<bool> = intervals
        .iter()
        .zip(truths)
        .map(|((lo, hi), t)| lo <= t && t <= hi)
        .collect();

    let idx = test.all_indices();
    let x: Vec<Array> = (0..spec.j).map(|a| test.x_alt_matrix(&idx, a)).collect();
    let q = test.q_matrix(&idx);
    let y = test.y_vec(&idx);
    let probs = posterior_predictive(&chain, &x, &q)?;
    let (ba, _) = balanced_accuracy(&probs, &y)?;
    let raw = raw_accuracy(&probs, &y)?;
    let mll = mean_log_likelihood(&probs, &y)?;

    Ok(ReplicationRow {
        replication: rep,
        model: midx,
        intervals,
        points,
        hits,
        balanced_accuracy: ba,
        raw_accuracy: raw,
        mean_log_lik: mll,
        chain_len: chain.len(),
    })
}

/// Per-model coverage fractions in the layout
/// `Model | Dataset Size | MRS 1..m | Average`.
pub fn coverage_table(report: &CoverageReport) -> Vec<CoverageRow> {
    let m = report.numerator_attrs.len();
    report
        .models
        .iter()
        .enumerate()
        .map(|(midx, spec)| {
            let rows: Vec<&ReplicationRow> =
                report.rows.iter().filter(|r| r.model == midx).collect();
            let mut per_mrs = vec![0.0; m];
            for r in &rows {
                for (k, &hit) in r.hits.iter().enumerate() {
                    if hit {
                        per_mrs[k] += 1.0;
                    }
                }
            }
            let denom = rows.len().max(1) as f64;
            for v in per_mrs.iter_mut() {
                *v /= denom;
            }
            let average = per_mrs.iter().sum::<f64>() / m as f64;
            CoverageRow {
                model: model_kind_name(spec.kind).to_string(),
                dataset_size: report.dgp.n,
                per_mrs,
                average,
            }
        })
        .collect()
}

/// Per-model mean holdout accuracy in the layout `Model | Dataset Size | Accuracy`.
pub fn accuracy_table(report: &CoverageReport) -> Vec<AccuracyRow> {
    report
        .models
        .iter()
        .enumerate()
        .map(|(midx, spec)| {
            let rows: Vec<&ReplicationRow> =
                report.rows.iter().filter(|r| r.model == midx).collect();
            let denom = rows.len().max(1) as f64;
            AccuracyRow {
                model: model_kind_name(spec.kind).to_string(),
                dataset_size: report.dgp.n,
                balanced_accuracy: rows.iter().map(|r| r.balanced_accuracy).sum::<f64>() / denom,
                raw_accuracy: rows.iter().map(|r| r.raw_accuracy).sum::<f64>() / denom,
            }
        })
        .collect()
}

/// Check a report against the truth hits using the shared definition
/// (kept here so the CLI and tests agree on the bookkeeping).
pub fn overall_average_coverage(report: &CoverageReport, model_idx: usize) -> f64 {
    let table = coverage_table(report);
    table[model_idx].average
}
