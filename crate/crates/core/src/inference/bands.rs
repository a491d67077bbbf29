//! Credible bands for representative utilities along one attribute.

use serde::{Deserialize, Serialize};

use crate::autodiff::Array;
use crate::data::ChoiceDataset;
use crate::error::{Error, Result};
use crate::inference::gradients::snapshot_bn;
use crate::inference::intervals::quantile;
use crate::model::{build_utilities, Mode};
use crate::sampler::PosteriorChain;

/// Pointwise credible band of alternative 0's representative utility as a
/// function of one attribute, the other inputs held at their sample means.
///
/// Utility location is not identified (softmax shift invariance), so each
/// draw's curve is centered by subtracting its own grid mean before the
/// quantiles are taken.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtilityBand {
    pub attr: usize,
    pub level: f64,
    pub grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub mean: Vec<f64>,
    pub upper: Vec<f64>,
}

impl UtilityBand {
    pub fn mean_width(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .sum::<f64>()
            / self.grid.len() as f64
    }
}

/// Evaluate the band for `attr` over `grid` (values in the dataset's units;
/// they are standardized internally when the dataset is standardized).
pub fn utility_bands(
    chain: &PosteriorChain,
    data: &ChoiceDataset,
    attr: usize,
    grid: &[f64],
    level: f64,
) -> Result<UtilityBand> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let spec = &chain.model_spec;
    if attr >= spec.k_x {
        return Err(Error::InvalidArgument("attribute index out of range".into()));
    }
    let g = grid.len();

    // reference individual: every input at its sample mean
    let idx = data.all_indices();
    let mut x_mean = vec![vec![0.0; spec.k_x]; spec.j];
    for alt in 0..spec.j {
        for k in 0..spec.k_x {
            let mut s = 0.0;
            for &i in &idx {
                s += data.x_at(i, alt, k);
            }
            x_mean[alt][k] = s / idx.len() as f64;
        }
    }
    let mut q_mean = vec![0.0; spec.k_q];
    for k in 0..spec.k_q {
        let mut s = 0.0;
        for &i in &idx {
            s += data.q_at(i, k);
        }
        q_mean[k] = s / idx.len() as f64;
    }

    // one synthetic observation per grid point; alternative 0 varies
    let mut x: Vec<Array> = Vec::with_capacity(spec.j);
    for alt in 0..spec.j {
        let mut rows = Vec::with_capacity(g);
        for &v in grid {
            let mut row = x_mean[alt].clone();
            if alt == 0 {
                row[attr] = v;
            }
            rows.push(row);
        }
        x.push(Array::from_rows(&rows)?);
    }
    let q = Array::from_rows(&vec![q_mean; g])?;

    // per grid point, the centered draws
    let mut curves: Vec<Vec<f64>> = vec![Vec::with_capacity(chain.len()); g];
    for snap in &chain.snapshots {
        let bn = snapshot_bn(snap, spec.j);
        let graph = build_utilities(spec, &snap.params, &x, &q, Mode::Eval, &bn)?;
        let u = graph.utilities_value();
        let vals: Vec<f64> = (0..g).map(|r| u.get2(r, 0)).collect();
        let center = vals.iter().sum::<f64>() / g as f64;
        for (r, v) in vals.into_iter().enumerate() {
            curves[r].push(v - center);
        }
    }

    let tail = (1.0 - level) / 2.0;
    let mut lower = Vec::with_capacity(g);
    let mut mean = Vec::with_capacity(g);
    let mut upper = Vec::with_capacity(g);
    for draws in &curves {
        lower.push(quantile(draws, tail));
        upper.push(quantile(draws, 1.0 - tail));
        mean.push(draws.iter().sum::<f64>() / draws.len() as f64);
    }
    Ok(UtilityBand {
        attr,
        level,
        grid: grid.to_vec(),
        lower,
        mean,
        upper,
    })
}
