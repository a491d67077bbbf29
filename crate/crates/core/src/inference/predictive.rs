//! Bayesian-model-average predictions and accuracy metrics.

use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::model::{predict_probabilities, BnState};
use crate::sampler::PosteriorChain;

/// Posterior-predictive choice probabilities: the average over chain
/// snapshots of eval-mode probabilities (each snapshot normalizes with its
/// own stored batch-norm running statistics). Rows sum to one.
pub fn posterior_predictive(chain: &PosteriorChain, x: &[Array], q: &Array) -> Result<Array> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let spec = &chain.model_spec;
    let n = q.rows();
    let mut acc = Array::zeros(&[n, spec.j]);
    for snap in &chain.snapshots {
        let bn = snap.bn.clone().unwrap_or_else(|| BnState::new(spec.j));
        let p = predict_probabilities(spec, &snap.params, &bn, x, q)?;
        acc.axpy(1.0, &p);
    }
    let m = chain.len() as f64;
    Ok(acc.map(|v| v / m))
}

/// Mean over classes of per-class recall under the argmax rule. Classes
/// absent from the labels are excluded (their recall is undefined); the
/// number of excluded classes is returned alongside.
pub fn balanced_accuracy(probabilities: &Array, labels: &[usize]) -> Result<(f64, usize)> {
    let (n, j) = (probabilities.rows(), probabilities.cols());
    if labels.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} rows",
            labels.len(),
            n
        )));
    }
    let mut correct = vec![0usize; j];
    let mut count = vec![0usize; j];
    for (i, &y) in labels.iter().enumerate() {
        count[y] += 1;
        if argmax_row(probabilities, i) == y {
            correct[y] += 1;
        }
    }
    let mut recall_sum = 0.0;
    let mut present = 0usize;
    for c in 0..j {
        if count[c] > 0 {
            recall_sum += correct[c] as f64 / count[c] as f64;
            present += 1;
        }
    }
    if present == 0 {
        return Err(Error::InvalidArgument("no labels".into()));
    }
    Ok((recall_sum / present as f64, j - present))
}

/// Plain argmax accuracy.
pub fn raw_accuracy(probabilities: &Array, labels: &[usize]) -> Result<f64> {
    let n = probabilities.rows();
    if labels.len() != n || n == 0 {
        return Err(Error::InvalidArgument("labels do not match rows".into()));
    }
    let correct = labels
        .iter()
        .enumerate()
        .filter(|(i, &y)| argmax_row(probabilities, *i) == y)
        .count();
    Ok(correct as f64 / n as f64)
}

/// Mean log predictive density of the observed choices.
pub fn mean_log_likelihood(probabilities: &Array, labels: &[usize]) -> Result<f64> {
    let n = probabilities.rows();
    if labels.len() != n || n == 0 {
        return Err(Error::InvalidArgument("labels do not match rows".into()));
    }
    let mut s = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        s += probabilities.get2(i, y).max(f64::MIN_POSITIVE).ln();
    }
    Ok(s / n as f64)
}

fn argmax_row(p: &Array, i: usize) -> usize {
    let mut best = 0;
    let mut bv = f64::NEG_INFINITY;
    for c in 0..p.cols() {
        let v = p.get2(i, c);
        if v > bv {
            bv = v;
            best = c;
        }
    }
    best
}
