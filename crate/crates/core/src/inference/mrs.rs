//! Marginal rates of substitution and value of travel time from a chain.
//!
//! The MRS between attributes l and k is the ratio of utility derivatives
//! `(du/dx_l) / (du/dx_k)`. Per posterior draw we average the per-individual,
//! per-alternative ratios over the evaluation sample; the credible interval
//! is the equal-tailed quantile interval of those draw averages. When the
//! dataset was standardized, derivatives are rescaled to original units
//! before any ratio is formed.

use serde::{Deserialize, Serialize};

use crate::autodiff::Array;
use crate::data::ChoiceDataset;
use crate::error::{Error, Result};
use crate::inference::gradients::chain_input_gradients;
use crate::inference::intervals::equal_tailed_interval;
use crate::sampler::PosteriorChain;

/// Draws whose mean denominator derivative is this close to zero are
/// excluded (and counted); more than 10% of them is a hard error.
pub const MRS_DENOMINATOR_FLOOR: f64 = 1e-10;
const MAX_FLAGGED_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MrsEstimate {
    pub numerator_attr: usize,
    pub denominator_attr: usize,
    pub level: f64,
    /// Per-draw average MRS (flagged draws excluded).
    pub draws: Vec<f64>,
    /// Posterior mean of the draw averages.
    pub point: f64,
    /// Equal-tailed credible interval at `level`.
    pub interval: (f64, f64),
    pub flagged_draws: usize,
}

/// MRS of several numerator attributes against one denominator attribute,
/// sharing one gradient sweep over the chain.
pub fn mrs_set(
    chain: &PosteriorChain,
    data: &ChoiceDataset,
    denominator_attr: usize,
    numerator_attrs: &[usize],
    level: f64,
) -> Result<Vec<MrsEstimate>> {
    let spec = &chain.model_spec;
    if denominator_attr >= spec.k_x || numerator_attrs.iter().any(|&l| l >= spec.k_x) {
        return Err(Error::InvalidArgument("attribute index out of range".into()));
    }
    let idx = data.all_indices();
    let x: Vec<Array> = (0..spec.j).map(|a| data.x_alt_matrix(&idx, a)).collect();
    let q = data.q_matrix(&idx);
    let stds: Option<Vec<f64>> = data
        .meta
        .standardization
        .as_ref()
        .map(|s| s.attr.iter().map(|c| c.std).collect());
    let per_draw = chain_input_gradients(chain, &x, &q, stds.as_deref())?;

    let n_units = (data.n * spec.j) as f64;
    let mut by_numerator: Vec<Vec<f64>> = vec![Vec::new(); numerator_attrs.len()];
    let mut flagged = 0usize;
    for grads in &per_draw {
        let mut den_mean = 0.0;
        for g in grads {
            for i in 0..g.rows() {
                den_mean += g.get2(i, denominator_attr);
            }
        }
        den_mean /= n_units;
        if den_mean.abs() < MRS_DENOMINATOR_FLOOR {
            flagged += 1;
            continue;
        }
        for (slot, &l) in numerator_attrs.iter().enumerate() {
            let mut ratio_sum = 0.0;
            for g in grads {
                for i in 0..g.rows() {
                    ratio_sum += g.get2(i, l) / g.get2(i, denominator_attr);
                }
            }
            by_numerator[slot].push(ratio_sum / n_units);
        }
    }
    let total = per_draw.len();
    if flagged as f64 > MAX_FLAGGED_FRACTION * total as f64 {
        return Err(Error::UnstableMrs {
            flagged,
            total,
            threshold: MRS_DENOMINATOR_FLOOR,
        });
    }
    numerator_attrs
        .iter()
        .zip(by_numerator)
        .map(|(&l, draws)| {
            let interval = equal_tailed_interval(&draws, level)?;
            let point = draws.iter().sum::<f64>() / draws.len() as f64;
            Ok(MrsEstimate {
                numerator_attr: l,
                denominator_attr,
                level,
                draws,
                point,
                interval,
                flagged_draws: flagged,
            })
        })
        .collect()
}

/// MRS of attribute `l` with respect to attribute `k`.
pub fn mrs(
    chain: &PosteriorChain,
    data: &ChoiceDataset,
    k: usize,
    l: usize,
    level: f64,
) -> Result<MrsEstimate> {
    Ok(mrs_set(chain, data, k, &[l], level)?.pop().unwrap())
}

/// Value-of-travel-time summary: per (individual, alternative) means over
/// draws of `(du/dtime) / (du/dcost) * minutes_per_hour`, plus pooled and
/// per-alternative medians.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VottSummary {
    pub time_attr: usize,
    pub cost_attr: usize,
    pub minutes_per_hour: f64,
    /// `per_alternative[j][i]` is individual i's mean-over-draws VOTT for
    /// alternative j, in currency per hour.
    pub per_alternative: Vec<Vec<f64>>,
    /// Median over all (individual, alternative) values — the headline.
    pub median: f64,
    pub per_alternative_median: Vec<f64>,
    pub flagged_draws: usize,
}

/// Compute VOTT across a chain. Time is expected in minutes and cost in
/// currency units (declare units in the dataset schema); the result is
/// currency per hour.
pub fn vott(
    chain: &PosteriorChain,
    data: &ChoiceDataset,
    time_attr: usize,
    cost_attr: usize,
    minutes_per_hour: f64,
) -> Result<VottSummary> {
    let spec = &chain.model_spec;
    if time_attr >= spec.k_x || cost_attr >= spec.k_x {
        return Err(Error::InvalidArgument("attribute index out of range".into()));
    }
    let idx = data.all_indices();
    let x: Vec<Array> = (0..spec.j).map(|a| data.x_alt_matrix(&idx, a)).collect();
    let q = data.q_matrix(&idx);
    let stds: Option<Vec<f64>> = data
        .meta
        .standardization
        .as_ref()
        .map(|s| s.attr.iter().map(|c| c.std).collect());
    let per_draw = chain_input_gradients(chain, &x, &q, stds.as_deref())?;

    let n = data.n;
    let n_units = (n * spec.j) as f64;
    let mut sums = vec![vec![0.0f64; n]; spec.j];
    let mut kept = 0usize;
    let mut flagged = 0usize;
    for grads in &per_draw {
        let mut den_mean = 0.0;
        for g in grads {
            for i in 0..n {
                den_mean += g.get2(i, cost_attr);
            }
        }
        den_mean /= n_units;
        if den_mean.abs() < MRS_DENOMINATOR_FLOOR {
            flagged += 1;
            continue;
        }
        kept += 1;
        for (alt, g) in grads.iter().enumerate() {
            for i in 0..n {
                sums[alt][i] += g.get2(i, time_attr) / g.get2(i, cost_attr) * minutes_per_hour;
            }
        }
    }
    let total = per_draw.len();
    if kept == 0 || flagged as f64 > MAX_FLAGGED_FRACTION * total as f64 {
        return Err(Error::UnstableMrs {
            flagged,
            total,
            threshold: MRS_DENOMINATOR_FLOOR,
        });
    }
    let per_alternative: Vec<Vec<f64>> = sums
        .into_iter()
        .map(|col| col.into_iter().map(|s| s / kept as f64).collect())
        .collect();
    let mut pooled: Vec<f64> = per_alternative.iter().flatten().copied().collect();
    let median = median_of(&mut pooled);
    let per_alternative_median = per_alternative
        .iter()
        .map(|col| {
            let mut c = col.clone();
            median_of(&mut c)
        })
        .collect();
    Ok(VottSummary {
        time_attr,
        cost_attr,
        minutes_per_hour,
        per_alternative,
        median,
        per_alternative_median,
        flagged_draws: flagged,
    })
}

fn median_of(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
