//! Phase-1 SGD, the SGLD update, and the two-step driver.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{batchnorm_stats_update, Array};
use crate::data::{minibatches, ChoiceDataset};
use crate::error::{Error, Result};
use crate::model::{
    attach_loss, build_informed_utilities, build_loss, BnState, LossGraph, Mode, ModelKind,
    ModelSpec, ParamClass, ParameterSet,
};
use crate::sampler::chain::{PosteriorChain, Snapshot, CHAIN_VERSION};
use crate::sampler::config::{derive_seed, step_size, SgldConfig};

// seed-stream tags
const TAG_INIT: u64 = 1;
const TAG_NOISE: u64 = 2;
const TAG_PHASE1_SHUFFLE: u64 = 1 << 20;
const TAG_PHASE2_SHUFFLE: u64 = 2 << 20;

/// Gradient arrays aligned with the parameter-group indices of a
/// [`ParameterSet`]; groups absent from the graph carry `None`.
#[derive(Debug, Clone)]
pub struct GroupGrads {
    by_group: Vec<Option<Array>>,
}

impl GroupGrads {
    /// Gradient of the loss for every parameter group used by `lg`.
    pub fn of_loss(lg: &LossGraph, params: &ParameterSet) -> Result<GroupGrads> {
        let wrt: Vec<_> = lg.graph.param_nodes.iter().map(|(_, n)| *n).collect();
        let grads = lg.graph.tape.backward(lg.loss, &wrt)?;
        let mut by_group = vec![None; params.groups.len()];
        for (gidx, node) in &lg.graph.param_nodes {
            by_group[*gidx] = Some(grads.get(*node).clone());
        }
        Ok(GroupGrads { by_group })
    }

    /// Flip signs: the gradient of the log posterior is the negated gradient
    /// of the penalized loss.
    pub fn negated(mut self) -> GroupGrads {
        for g in self.by_group.iter_mut().flatten() {
            for v in g.data_mut() {
                *v = -*v;
            }
        }
        self
    }

    pub fn get(&self, group: usize) -> Option<&Array> {
        self.by_group.get(group).and_then(|g| g.as_ref())
    }
}

/// One SGLD update:
/// `theta += (alpha_t / 2) * grad_log_posterior + Normal(0, alpha_t I)`.
///
/// The injected noise has variance exactly `alpha_t` (scaled by
/// `noise_scale`, which exists so tests can force it to zero); frozen groups
/// are left untouched. Gradients must already carry the `N/n` minibatch
/// rescaling.
pub fn sgld_step(
    params: &mut ParameterSet,
    grad_log_posterior: &GroupGrads,
    alpha_t: f64,
    noise_scale: f64,
    rng: &mut ChaCha8Rng,
) {
    let half = alpha_t / 2.0;
    let noise_std = alpha_t.sqrt() * noise_scale;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let frozen = params.frozen;
    for (gidx, group) in params.groups.iter_mut().enumerate() {
        if frozen.is_frozen(group.class) {
            continue;
        }
        let Some(grad) = grad_log_posterior.get(gidx) else {
            continue;
        };
        let gdata = grad.data();
        let data = group.value.data_mut();
        if noise_scale == 0.0 {
            for (v, &g) in data.iter_mut().zip(gdata) {
                *v += half * g;
            }
        } else {
            for (v, &g) in data.iter_mut().zip(gdata) {
                *v += half * g + noise_std * normal.sample(rng);
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Phase1Report {
    pub final_loss: Option<f64>,
    pub epochs_run: usize,
}

/// Phase 1: minibatch SGD with momentum on the informed component, the
/// nonlinear group frozen. Stops when the relative epoch-loss improvement
/// falls below `phase1_tolerance` or the epoch budget runs out. Frozen
/// parameters come back bit-identical.
pub fn sgd_phase1(
    spec: &ModelSpec,
    params: &mut ParameterSet,
    train: &ChoiceDataset,
    cfg: &SgldConfig,
) -> Result<Phase1Report> {
    cfg.validate()?;
    if spec.kind == ModelKind::FullyConnected {
        // no informed component: phase 1 is disabled for this baseline
        return Ok(Phase1Report {
            final_loss: None,
            epochs_run: 0,
        });
    }
    params.frozen = crate::model::FreezeMask::nonlinear_frozen();
    let n = train.n;
    let lr = cfg.phase1_step();
    let momentum = cfg.phase1_momentum;
    let mut velocity: Vec<Array> = params
        .groups
        .iter()
        .map(|g| Array::zeros(g.value.shape()))
        .collect();
    let all_idx = train.all_indices();
    let mut prev_epoch_loss: Option<f64> = None;
    let mut report = Phase1Report {
        final_loss: None,
        epochs_run: 0,
    };
    let mut step = 0usize;
    for epoch in 0..cfg.phase1_max_epochs {
        let epoch_seed = derive_seed(cfg.seed, TAG_PHASE1_SHUFFLE + epoch as u64);
        let batches = minibatches(n, cfg.batch_size.min(n), epoch_seed);
        let mut loss_sum = 0.0;
        for batch in &batches {
            let idx: Vec<usize> = batch.iter().map(|&b| all_idx[b]).collect();
            let x: Vec<Array> = (0..spec.j).map(|a| train.x_alt_matrix(&idx, a)).collect();
            let q = train.q_matrix(&idx);
            let y = train.y_vec(&idx);
            let scale = n as f64 / idx.len() as f64;
            let graph = build_informed_utilities(spec, params, &x, &q)?;
            let lg = attach_loss(spec, params, graph, &y, scale)?;
            let loss_val = lg.graph.tape.value(lg.loss).scalar_value();
            if !loss_val.is_finite() {
                return Err(Error::Divergence { step });
            }
            loss_sum += loss_val;
            let grads = GroupGrads::of_loss(&lg, params)?;
            let frozen = params.frozen;
            for (gidx, group) in params.groups.iter_mut().enumerate() {
                if frozen.is_frozen(group.class) {
                    continue;
                }
                let Some(g) = grads.get(gidx) else { continue };
                let v = &mut velocity[gidx];
                for ((vi, &gi), pi) in v
                    .data_mut()
                    .iter_mut()
                    .zip(g.data())
                    .zip(group.value.data_mut())
                {
                    *vi = momentum * *vi - lr * gi;
                    *pi += *vi;
                }
            }
            step += 1;
        }
        let epoch_loss = loss_sum / batches.len().max(1) as f64;
        report.epochs_run = epoch + 1;
        report.final_loss = Some(epoch_loss);
        if let Some(prev) = prev_epoch_loss {
            let rel = (prev - epoch_loss) / prev.abs().max(f64::MIN_POSITIVE);
            if rel < cfg.phase1_tolerance {
                break;
            }
        }
        prev_epoch_loss = Some(epoch_loss);
    }
    Ok(report)
}

/// The full two-step procedure.
///
/// Phase 1 optimizes the informed component with the nonlinear group frozen
/// (skipped for the fully connected baseline, equal to whole-model
/// optimization for the conditional logit). The scale parameters are then
/// re-initialized to 0.1 so sampling starts near the informed hypothesis,
/// everything is unfrozen, and SGLD runs for `phase2_epochs`, snapshotting
/// once per epoch after burn-in, thinned.
pub fn run_two_step(
    spec: &ModelSpec,
    train: &ChoiceDataset,
    cfg: &SgldConfig,
) -> Result<PosteriorChain> {
    spec.validate()?;
    cfg.validate()?;
    let mut params = ParameterSet::init(spec, derive_seed(cfg.seed, TAG_INIT));
    let p1 = sgd_phase1(spec, &mut params, train, cfg)?;

    // phase 2 starts near the informed optimum
    if spec.kind == ModelKind::Proposed {
        params.set_scalar("sigma_iia", 0.1);
        params.set_scalar("sigma_noniia", 0.1);
    }
    params.frozen = crate::model::FreezeMask::none();

    let mut bn = BnState::new(spec.j);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_NOISE));
    let n = train.n;
    let all_idx = train.all_indices();

    let epochs = cfg.phase2_epochs;
    let post = ((epochs as f64) * (1.0 - cfg.burn_in_fraction)).floor() as usize;
    let burn_start = epochs - post;

    let mut snapshots: Vec<Snapshot> = Vec::new();
    let mut t = 0usize; // phase-2 step counter drives the schedule
    let mut post_burn_steps = 0usize;
    for epoch in 0..epochs {
        let epoch_seed = derive_seed(cfg.seed, TAG_PHASE2_SHUFFLE + epoch as u64);
        let batches = minibatches(n, cfg.batch_size.min(n), epoch_seed);
        for batch in &batches {
            let idx: Vec<usize> = batch.iter().map(|&b| all_idx[b]).collect();
            let x: Vec<Array> = (0..spec.j).map(|a| train.x_alt_matrix(&idx, a)).collect();
            let q = train.q_matrix(&idx);
            let y = train.y_vec(&idx);
            let scale = n as f64 / idx.len() as f64;
            let lg = build_loss(spec, &params, &x, &q, &y, Mode::Train, &bn, scale)?;
            let loss_val = lg.graph.tape.value(lg.loss).scalar_value();
            if !loss_val.is_finite() {
                return Err(Error::Divergence { step: t });
            }
            // running statistics follow the batch statistics just recorded
            if let (Some(bn_f), Some(bn_g)) = (lg.graph.bn_f, lg.graph.bn_g) {
                if let Some((m, v)) = lg.graph.tape.batch_stats(bn_f) {
                    let (nm, nv) =
                        batchnorm_stats_update((&bn.f.mean, &bn.f.var), (m, v), cfg.bn_momentum);
                    bn.f.mean = nm;
                    bn.f.var = nv;
                }
                if let Some((m, v)) = lg.graph.tape.batch_stats(bn_g) {
                    let (nm, nv) =
                        batchnorm_stats_update((&bn.g.mean, &bn.g.var), (m, v), cfg.bn_momentum);
                    bn.g.mean = nm;
                    bn.g.var = nv;
                }
            }
            let grads = GroupGrads::of_loss(&lg, &params)?.negated();
            let alpha = step_size(cfg.a, cfg.b, cfg.gamma_decay, t);
            sgld_step(&mut params, &grads, alpha, cfg.noise_scale, &mut noise_rng);
            t += 1;
            if cfg.snapshot_per_batch && epoch >= burn_start {
                post_burn_steps += 1;
                if post_burn_steps % cfg.thin == 0 {
                    snapshots.push(make_snapshot(spec, &params, &bn, epoch, t));
                }
            }
        }
        if !cfg.snapshot_per_batch
            && epoch >= burn_start
            && (epoch - burn_start + 1) % cfg.thin == 0
        {
            snapshots.push(make_snapshot(spec, &params, &bn, epoch, t));
        }
    }

    Ok(PosteriorChain {
        version: CHAIN_VERSION,
        seed: cfg.seed,
        model_spec: spec.clone(),
        spec_digest: spec.digest(),
        config: cfg.clone(),
        phase1_final_loss: p1.final_loss,
        phase1_epochs_run: p1.epochs_run,
        snapshots,
    })
}

fn make_snapshot(
    spec: &ModelSpec,
    params: &ParameterSet,
    bn: &BnState,
    epoch: usize,
    step: usize,
) -> Snapshot {
    Snapshot {
        phase: 2,
        epoch,
        step,
        params: params.clone(),
        bn: (spec.kind == ModelKind::Proposed).then(|| bn.clone()),
    }
}

/// Number of snapshots a per-epoch-cadence run will collect.
pub fn expected_chain_len(phase2_epochs: usize, burn_in_fraction: f64, thin: usize) -> usize {
    let post = ((phase2_epochs as f64) * (1.0 - burn_in_fraction)).floor() as usize;
    post / thin
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GammaMode;

    #[test]
    fn chain_length_bookkeeping() {
        assert_eq!(expected_chain_len(5000, 0.5, 5), 500);
        assert_eq!(expected_chain_len(7, 0.5, 2), 1);
        assert_eq!(expected_chain_len(10, 0.0, 1), 10);
    }

    #[test]
    fn frozen_groups_are_untouched_by_sgld_step() {
        let mut spec = ModelSpec::new(ModelKind::Proposed, 3, 2, 2);
        spec.hidden_units = 4;
        spec.hidden_layers = 1;
        spec.gamma_mode = GammaMode::Embedding;
        let mut params = ParameterSet::init(&spec, 5);
        params.frozen = crate::model::FreezeMask::nonlinear_frozen();
        let before = params.to_json();
        // a gradient for every group
        let by_group: Vec<Option<Array>> = params
            .groups
            .iter()
            .map(|g| Some(Array::filled(g.value.shape(), 1.0)))
            .collect();
        let grads = GroupGrads { by_group };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        sgld_step(&mut params, &grads, 0.01, 1.0, &mut rng);
        let after = ParameterSet::from_json(&before).unwrap();
        for (b, a) in after.groups.iter().zip(&params.groups) {
            if matches!(b.class, ParamClass::Nonlinear) {
                assert_eq!(b.value, a.value, "frozen group {} moved", b.name);
            } else {
                assert_ne!(b.value, a.value, "unfrozen group {} did not move", b.name);
            }
        }
    }

    #[test]
    fn noise_variance_matches_step_size() {
        // one free scalar parameter, zero gradient: the update is pure noise
        let spec = ModelSpec::new(ModelKind::ConditionalLogit, 2, 1, 1);
        let alpha = 0.04;
        let mut draws = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20000 {
            let mut params = ParameterSet::init(&spec, 0);
            let by_group = params
                .groups
                .iter()
                .map(|g| Some(Array::zeros(g.value.shape())))
                .collect();
            let grads = GroupGrads { by_group };
            sgld_step(&mut params, &grads, alpha, 1.0, &mut rng);
            draws.push(params.get("beta").unwrap().data()[0]);
        }
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 0.005, "mean {}", mean);
        assert!((var - alpha).abs() < 0.002, "var {} vs alpha {}", var, alpha);
    }
}
