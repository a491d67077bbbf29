//! Tape builders for the three architectures and their penalized loss.

use crate::autodiff::{Array, NodeId, Tape};
use crate::error::{Error, Result};
use crate::model::params::{BnState, ParameterSet};
use crate::model::spec::{GammaMode, ModelKind, ModelSpec};

/// Train mode normalizes by batch statistics (and records them);
/// eval mode normalizes by running statistics, making every row's output
/// independent of the rest of the batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A built forward pass: the tape plus the node ids needed downstream.
pub struct ForwardGraph {
    pub tape: Tape,
    /// Representative utilities, `n x J`.
    pub utilities: NodeId,
    /// Per-alternative attribute input leaves (`n x K_x` each).
    pub x_leaves: Vec<NodeId>,
    /// Shared-characteristic input leaf (`n x K_q`).
    pub q_leaf: NodeId,
    /// (parameter-group index, leaf node) for every group used by the graph.
    pub param_nodes: Vec<(usize, NodeId)>,
    /// Batch-norm nodes of the IIA / non-IIA blocks when present
    /// (train mode records batch statistics on them).
    pub bn_f: Option<NodeId>,
    pub bn_g: Option<NodeId>,
}

impl ForwardGraph {
    pub fn utilities_value(&self) -> &Array {
        self.tape.value(self.utilities)
    }

    pub fn param_node(&self, params: &ParameterSet, name: &str) -> Option<NodeId> {
        let idx = params.index_of(name)?;
        self.param_nodes
            .iter()
            .find(|(g, _)| *g == idx)
            .map(|(_, n)| *n)
    }
}

/// A forward pass extended with log-probabilities and the penalized loss.
pub struct LossGraph {
    pub graph: ForwardGraph,
    pub log_probs: NodeId,
    /// Batch-sum negative log-likelihood (unscaled).
    pub nll: NodeId,
    /// `nll_scale * nll + penalty` — the optimization / sampling objective.
    pub loss: NodeId,
}

struct Builder<'a> {
    tape: Tape,
    params: &'a ParameterSet,
    param_nodes: Vec<(usize, NodeId)>,
}

impl<'a> Builder<'a> {
    fn new(params: &'a ParameterSet) -> Self {
        Builder {
            tape: Tape::new(),
            params,
            param_nodes: Vec::new(),
        }
    }

    /// Leaf node for a named parameter group; the same node is returned on
    /// repeated calls so shared weights accumulate one gradient.
    fn leaf(&mut self, name: &str) -> Result<NodeId> {
        let idx = self
            .params
            .index_of(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter group `{}`", name)))?;
        if let Some((_, node)) = self.param_nodes.iter().find(|(g, _)| *g == idx) {
            return Ok(*node);
        }
        let node = self.tape.param(self.params.groups[idx].value.clone());
        self.param_nodes.push((idx, node));
        Ok(node)
    }

    /// ReLU MLP with `layers` hidden layers and a linear head, using groups
    /// `{prefix}.w1/.b1 .. {prefix}.head_w/.head_b`.
    fn mlp(&mut self, prefix: &str, layers: usize, input: NodeId) -> Result<NodeId> {
        let mut h = input;
        for layer in 1..=layers {
            let w = self.leaf(&format!("{}.w{}", prefix, layer))?;
            let b = self.leaf(&format!("{}.b{}", prefix, layer))?;
            let z = self.tape.matmul(h, w)?;
            let z = self.tape.add(z, b)?;
            h = self.tape.relu(z);
        }
        let w = self.leaf(&format!("{}.head_w", prefix))?;
        let b = self.leaf(&format!("{}.head_b", prefix))?;
        let z = self.tape.matmul(h, w)?;
        self.tape.add(z, b)
    }

    /// Alternative-specific constants as a broadcastable `1 x J` row with the
    /// base alternative (index J-1) fixed at zero.
    fn alpha_row(&mut self, j: usize) -> Result<NodeId> {
        let alpha = self.leaf("alpha")?;
        let mut parts = Vec::with_capacity(j);
        for alt in 0..j - 1 {
            parts.push(self.tape.embed_select(alpha, &[alt])?);
        }
        parts.push(self.tape.constant(Array::zeros(&[1, 1])));
        self.tape.concat(&parts)
    }

    /// Per-alternative embeddings of the shared characteristics
    /// (`n x K_q` each): one affine + ReLU hidden layer, linear output.
    fn embeddings(&mut self, j: usize, q_leaf: NodeId) -> Result<Vec<NodeId>> {
        let mut out = Vec::with_capacity(j);
        for alt in 0..j {
            let w1 = self.leaf(&format!("embed{}.w1", alt))?;
            let b1 = self.leaf(&format!("embed{}.b1", alt))?;
            let w2 = self.leaf(&format!("embed{}.w2", alt))?;
            let b2 = self.leaf(&format!("embed{}.b2", alt))?;
            let z = self.tape.matmul(q_leaf, w1)?;
            let z = self.tape.add(z, b1)?;
            let h = self.tape.relu(z);
            let e = self.tape.matmul(h, w2)?;
            out.push(self.tape.add(e, b2)?);
        }
        Ok(out)
    }

    /// The informed linear component `alpha_j + x_ij beta + q_ij gamma`
    /// (or the base-zero formulation on raw characteristics).
    fn informed(
        &mut self,
        spec: &ModelSpec,
        x_leaves: &[NodeId],
        q_leaf: NodeId,
        embeds: Option<&[NodeId]>,
    ) -> Result<NodeId> {
        let beta = self.leaf("beta")?;
        let mut cols = Vec::with_capacity(spec.j);
        match (spec.gamma_mode, embeds) {
            (GammaMode::Embedding, Some(embeds)) => {
                let gamma = self.leaf("gamma")?;
                for alt in 0..spec.j {
                    let xb = self.tape.matmul(x_leaves[alt], beta)?;
                    let eg = self.tape.matmul(embeds[alt], gamma)?;
                    cols.push(self.tape.add(xb, eg)?);
                }
            }
            _ => {
                for alt in 0..spec.j {
                    cols.push(self.tape.matmul(x_leaves[alt], beta)?);
                }
            }
        }
        let mut v = self.tape.concat(&cols)?;
        if matches!(spec.gamma_mode, GammaMode::BaseZero) || embeds.is_none() {
            // per-alternative gamma on raw q, base alternative fixed at zero
            if spec.k_q > 0 {
                let gamma = self.leaf("gamma")?;
                let qg = self.tape.matmul(q_leaf, gamma)?;
                let n = self.tape.value(q_leaf).rows();
                let zero = self.tape.constant(Array::zeros(&[n, 1]));
                let qg_full = self.tape.concat(&[qg, zero])?;
                v = self.tape.add(v, qg_full)?;
            }
        }
        let alpha = self.alpha_row(spec.j)?;
        self.tape.add(v, alpha)
    }
}

fn make_leaves(tape: &mut Tape, spec: &ModelSpec, x: &[Array], q: &Array) -> Result<(Vec<NodeId>, NodeId)> {
    if x.len() != spec.j {
        return Err(Error::ShapeMismatch {
            op: "utilities",
            detail: format!("{} alternative matrices for J={}", x.len(), spec.j),
        });
    }
    let n = q.rows();
    for (alt, m) in x.iter().enumerate() {
        if m.shape() != [n, spec.k_x] {
            return Err(Error::ShapeMismatch {
                op: "utilities",
                detail: format!(
                    "alternative {} attributes have shape {:?}, expected [{}, {}]",
                    alt,
                    m.shape(),
                    n,
                    spec.k_x
                ),
            });
        }
    }
    if q.cols() != spec.k_q {
        return Err(Error::ShapeMismatch {
            op: "utilities",
            detail: format!("q has {} columns, expected {}", q.cols(), spec.k_q),
        });
    }
    let x_leaves: Vec<NodeId> = x.iter().map(|m| tape.input(m.clone())).collect();
    let q_leaf = tape.input(q.clone());
    Ok((x_leaves, q_leaf))
}

/// Build the full forward graph of `spec.kind` on a batch.
///
/// `x` holds one `n x K_x` matrix per alternative; `q` is `n x K_q`.
/// In train mode the proposed architecture records batch statistics on its
/// two batch-norm nodes; a train-mode batch of one row is an error.
pub fn build_utilities(
    spec: &ModelSpec,
    params: &ParameterSet,
    x: &[Array],
    q: &Array,
    mode: Mode,
    bn: &BnState,
) -> Result<ForwardGraph> {
    spec.validate()?;
    let mut b = Builder::new(params);
    let (x_leaves, q_leaf) = make_leaves(&mut b.tape, spec, x, q)?;

    let (utilities, bn_f, bn_g) = match spec.kind {
        ModelKind::ConditionalLogit => {
            let v = b.informed(spec, &x_leaves, q_leaf, None)?;
            (v, None, None)
        }
        ModelKind::FullyConnected => {
            let mut parts: Vec<NodeId> = x_leaves.clone();
            parts.push(q_leaf);
            let z = b.tape.concat(&parts)?;
            let v = b.mlp("fc", spec.hidden_layers, z)?;
            (v, None, None)
        }
        ModelKind::Proposed => {
            let embeds = b.embeddings(spec.j, q_leaf)?;
            let informed = b.informed(spec, &x_leaves, q_leaf, Some(&embeds))?;

            // IIA block: shared f applied per alternative, batch-normalized
            let mut f_cols = Vec::with_capacity(spec.j);
            for alt in 0..spec.j {
                let z = b.tape.concat(&[x_leaves[alt], embeds[alt]])?;
                f_cols.push(b.mlp("f", spec.hidden_layers, z)?);
            }
            let f_stack = b.tape.concat(&f_cols)?;
            let bn_f = match mode {
                Mode::Train => b.tape.batchnorm_train(f_stack)?,
                Mode::Eval => b.tape.batchnorm_eval(f_stack, &bn.f.mean, &bn.f.var)?,
            };
            let sigma_iia = b.leaf("sigma_iia")?;
            let iia = b.tape.scale(sigma_iia, bn_f)?;

            // non-IIA block: g over all alternatives' attributes and raw q
            let mut parts: Vec<NodeId> = x_leaves.clone();
            parts.push(q_leaf);
            let zg = b.tape.concat(&parts)?;
            let g_out = b.mlp("g", spec.hidden_layers, zg)?;
            let bn_g = match mode {
                Mode::Train => b.tape.batchnorm_train(g_out)?,
                Mode::Eval => b.tape.batchnorm_eval(g_out, &bn.g.mean, &bn.g.var)?,
            };
            let sigma_noniia = b.leaf("sigma_noniia")?;
            let noniia = b.tape.scale(sigma_noniia, bn_g)?;

            let v = b.tape.add(informed, iia)?;
            let v = b.tape.add(v, noniia)?;
            (v, Some(bn_f), Some(bn_g))
        }
    };

    Ok(ForwardGraph {
        tape: b.tape,
        utilities,
        x_leaves,
        q_leaf,
        param_nodes: b.param_nodes,
        bn_f,
        bn_g,
    })
}

/// The informed component on its own (embeddings included). For the
/// conditional logit this is the whole model; the fully connected baseline
/// has no informed component.
pub fn build_informed_utilities(
    spec: &ModelSpec,
    params: &ParameterSet,
    x: &[Array],
    q: &Array,
) -> Result<ForwardGraph> {
    spec.validate()?;
    if spec.kind == ModelKind::FullyConnected {
        return Err(Error::InvalidArgument(
            "the fully connected model has no informed component".into(),
        ));
    }
    let mut b = Builder::new(params);
    let (x_leaves, q_leaf) = make_leaves(&mut b.tape, spec, x, q)?;
    let utilities = match spec.kind {
        ModelKind::ConditionalLogit => b.informed(spec, &x_leaves, q_leaf, None)?,
        ModelKind::Proposed => {
            let embeds = b.embeddings(spec.j, q_leaf)?;
            b.informed(spec, &x_leaves, q_leaf, Some(&embeds))?
        }
        ModelKind::FullyConnected => unreachable!(),
    };
    Ok(ForwardGraph {
        tape: b.tape,
        utilities,
        x_leaves,
        q_leaf,
        param_nodes: b.param_nodes,
        bn_f: None,
        bn_g: None,
    })
}

/// Extend a forward graph with log-probabilities, the batch-sum negative
/// log-likelihood, and the penalized loss
/// `nll_scale * nll + (lambda_iia/2) sigma_iia^2 + (lambda_noniia/2) sigma_noniia^2
///  + (weight_decay/2) * sum ||W||^2` over the weight matrices in the graph.
pub fn attach_loss(
    spec: &ModelSpec,
    params: &ParameterSet,
    mut graph: ForwardGraph,
    y: &[usize],
    nll_scale: f64,
) -> Result<LossGraph> {
    let t = &mut graph.tape;
    let log_probs = t.log_softmax(graph.utilities)?;
    let nll = t.nll_loss(log_probs, y)?;

    let mut terms: Vec<NodeId> = Vec::new();
    if nll_scale == 1.0 {
        terms.push(nll);
    } else {
        let c = t.constant(Array::scalar(nll_scale));
        terms.push(t.scale(c, nll)?);
    }
    // scale priors
    for (name, lambda) in [
        ("sigma_iia", spec.lambda_iia),
        ("sigma_noniia", spec.lambda_noniia),
    ] {
        if lambda > 0.0 {
            if let Some(idx) = params.index_of(name) {
                if let Some((_, node)) = graph.param_nodes.iter().find(|(g, _)| *g == idx) {
                    let sq = t.power(*node, 2.0);
                    let c = t.constant(Array::scalar(lambda / 2.0));
                    terms.push(t.scale(c, sq)?);
                }
            }
        }
    }
    // global weight decay over the weight matrices present in the graph
    if spec.weight_decay > 0.0 {
        let decayed: Vec<NodeId> = graph
            .param_nodes
            .iter()
            .filter(|(g, _)| params.groups[*g].decay)
            .map(|(_, n)| *n)
            .collect();
        if !decayed.is_empty() {
            let mut acc: Option<NodeId> = None;
            for w in decayed {
                let sq = t.power(w, 2.0);
                let ss = t.reduce_sum(sq);
                acc = Some(match acc {
                    None => ss,
                    Some(a) => t.add(a, ss)?,
                });
            }
            let c = t.constant(Array::scalar(spec.weight_decay / 2.0));
            terms.push(t.scale(c, acc.unwrap())?);
        }
    }
    let mut loss = terms[0];
    for &term in &terms[1..] {
        loss = t.add(loss, term)?;
    }
    Ok(LossGraph {
        graph,
        log_probs,
        nll,
        loss,
    })
}

/// Forward + loss in one step.
#[allow(clippy::too_many_arguments)]
pub fn build_loss(
    spec: &ModelSpec,
    params: &ParameterSet,
    x: &[Array],
    q: &Array,
    y: &[usize],
    mode: Mode,
    bn: &BnState,
    nll_scale: f64,
) -> Result<LossGraph> {
    let graph = build_utilities(spec, params, x, q, mode, bn)?;
    attach_loss(spec, params, graph, y, nll_scale)
}

/// The penalized loss of a batch as a number: batch-sum cross-entropy plus
/// the scale priors and weight decay (no `N/n` rescaling — that is the
/// sampler's job).
pub fn penalized_loss(
    spec: &ModelSpec,
    params: &ParameterSet,
    x: &[Array],
    q: &Array,
    y: &[usize],
    mode: Mode,
    bn: &BnState,
) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let lg = build_loss(spec, params, x, q, y, mode, bn, 1.0)?;
    Ok(lg.graph.tape.value(lg.loss).scalar_value())
}

/// Row-softmax choice probabilities from a utility matrix.
/// Non-finite utilities are an error; rows sum to one.
pub fn choice_probabilities(utilities: &Array) -> Result<Array> {
    if !utilities.all_finite() {
        return Err(Error::NonFinite {
            context: "utilities".into(),
        });
    }
    let (n, j) = (utilities.rows(), utilities.cols());
    let mut out = Array::zeros(&[n, j]);
    for i in 0..n {
        let mut m = f64::NEG_INFINITY;
        for a in 0..j {
            m = m.max(utilities.get2(i, a));
        }
        let mut sum = 0.0;
        for a in 0..j {
            let e = (utilities.get2(i, a) - m).exp();
            out.set2(i, a, e);
            sum += e;
        }
        for a in 0..j {
            out.set2(i, a, out.get2(i, a) / sum);
        }
    }
    Ok(out)
}

/// Eval-mode choice probabilities for a batch under one parameter set.
pub fn predict_probabilities(
    spec: &ModelSpec,
    params: &ParameterSet,
    bn: &BnState,
    x: &[Array],
    q: &Array,
) -> Result<Array> {
    let graph = build_utilities(spec, params, x, q, Mode::Eval, bn)?;
    choice_probabilities(graph.utilities_value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_spec(kind: ModelKind) -> ModelSpec {
        let mut s = ModelSpec::new(kind, 3, 2, 2);
        s.hidden_units = 4;
        s.hidden_layers = 2;
        s
    }

    fn random_batch(n: usize, spec: &ModelSpec, seed: u64) -> (Vec<Array>, Array) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Array> = (0..spec.j)
            .map(|_| {
                Array::from_vec(
                    vec![n, spec.k_x],
                    (0..n * spec.k_x).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                )
                .unwrap()
            })
            .collect();
        let q = Array::from_vec(
            vec![n, spec.k_q],
            (0..n * spec.k_q).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap();
        (x, q)
    }

    #[test]
    fn conditional_logit_zero_params_zero_utilities() {
        let spec = toy_spec(ModelKind::ConditionalLogit);
        let params = ParameterSet::init(&spec, 0);
        let (x, q) = random_batch(5, &spec, 1);
        let g = build_utilities(&spec, &params, &x, &q, Mode::Eval, &BnState::new(3)).unwrap();
        assert!(g.utilities_value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conditional_logit_linear_readout() {
        // J=2, K_x=1, beta=[1], x=[[2],[5]] per observation -> v=[2,5]
        let mut spec = ModelSpec::new(ModelKind::ConditionalLogit, 2, 1, 1);
        spec.validate().unwrap();
        let mut params = ParameterSet::init(&spec, 0);
        params.get_mut("beta").unwrap().data_mut()[0] = 1.0;
        let x = vec![
            Array::from_vec(vec![1, 1], vec![2.0]).unwrap(),
            Array::from_vec(vec![1, 1], vec![5.0]).unwrap(),
        ];
        let q = Array::from_vec(vec![1, 1], vec![1.0]).unwrap();
        let g = build_utilities(&spec, &params, &x, &q, Mode::Eval, &BnState::new(2)).unwrap();
        assert_eq!(g.utilities_value().data(), &[2.0, 5.0]);
    }

    #[test]
    fn proposed_collapses_to_informed_when_scales_are_zero() {
        let spec = toy_spec(ModelKind::Proposed);
        let params = ParameterSet::init(&spec, 3); // sigma = 0 at init
        let (x, q) = random_batch(6, &spec, 2);
        let bn = BnState::new(3);
        let full = build_utilities(&spec, &params, &x, &q, Mode::Train, &bn).unwrap();
        let informed = build_informed_utilities(&spec, &params, &x, &q).unwrap();
        let a = full.utilities_value().data();
        let b = informed.utilities_value().data();
        assert_eq!(a, b, "collapse must be exact");
    }

    #[test]
    fn proposed_train_mode_rejects_batch_of_one() {
        let spec = toy_spec(ModelKind::Proposed);
        let params = ParameterSet::init(&spec, 3);
        let (x, q) = random_batch(1, &spec, 2);
        let err = build_utilities(&spec, &params, &x, &q, Mode::Train, &BnState::new(3));
        assert!(matches!(err, Err(Error::BatchTooSmall { rows: 1 })));
    }

    #[test]
    fn proposed_eval_mode_is_permutation_equivariant() {
        let spec = toy_spec(ModelKind::Proposed);
        let mut params = ParameterSet::init(&spec, 9);
        params.set_scalar("sigma_iia", 0.7);
        params.set_scalar("sigma_noniia", -0.4);
        let (x, q) = random_batch(5, &spec, 4);
        let bn = BnState::new(3);
        let v = build_utilities(&spec, &params, &x, &q, Mode::Eval, &bn)
            .unwrap()
            .utilities_value()
            .clone();
        // permute rows and re-run
        let perm = [4usize, 2, 0, 3, 1];
        let permute = |m: &Array| {
            let rows: Vec<Vec<f64>> = perm
                .iter()
                .map(|&i| (0..m.cols()).map(|c| m.get2(i, c)).collect())
                .collect();
            Array::from_rows(&rows).unwrap()
        };
        let xp: Vec<Array> = x.iter().map(permute).collect();
        let qp = permute(&q);
        let vp = build_utilities(&spec, &params, &xp, &qp, Mode::Eval, &bn)
            .unwrap()
            .utilities_value()
            .clone();
        for (r, &i) in perm.iter().enumerate() {
            for c in 0..3 {
                assert_eq!(vp.get2(r, c), v.get2(i, c), "eval rows are independent");
            }
        }
    }

    #[test]
    fn proposed_train_mode_bn_is_batch_permutation_symmetric() {
        let spec = toy_spec(ModelKind::Proposed);
        let mut params = ParameterSet::init(&spec, 9);
        params.set_scalar("sigma_iia", 1.0);
        params.set_scalar("sigma_noniia", 1.0);
        let (x, q) = random_batch(5, &spec, 4);
        let bn = BnState::new(3);
        let v = build_utilities(&spec, &params, &x, &q, Mode::Train, &bn)
            .unwrap()
            .utilities_value()
            .clone();
        let perm = [3usize, 0, 4, 1, 2];
        let permute = |m: &Array| {
            let rows: Vec<Vec<f64>> = perm
                .iter()
                .map(|&i| (0..m.cols()).map(|c| m.get2(i, c)).collect())
                .collect();
            Array::from_rows(&rows).unwrap()
        };
        let xp: Vec<Array> = x.iter().map(permute).collect();
        let qp = permute(&q);
        let vp = build_utilities(&spec, &params, &xp, &qp, Mode::Train, &bn)
            .unwrap()
            .utilities_value()
            .clone();
        for (r, &i) in perm.iter().enumerate() {
            for c in 0..3 {
                let d = (vp.get2(r, c) - v.get2(i, c)).abs();
                assert!(d < 1e-12, "batch statistics are permutation invariant");
            }
        }
    }

    #[test]
    fn zero_f_weights_with_unit_scale_add_nothing() {
        // f == 0 => BN of a zero column under the eps guard is 0
        let spec = toy_spec(ModelKind::Proposed);
        let mut params = ParameterSet::init(&spec, 5);
        for name in ["f.w1", "f.w2", "f.head_w", "f.b1", "f.b2", "f.head_b"] {
            let a = params.get_mut(name).unwrap();
            *a = Array::zeros(a.shape());
        }
        params.set_scalar("sigma_iia", 1.0);
        params.set_scalar("sigma_noniia", 0.0);
        let (x, q) = random_batch(6, &spec, 8);
        let bn = BnState::new(3);
        let full = build_utilities(&spec, &params, &x, &q, Mode::Train, &bn).unwrap();
        let informed = build_informed_utilities(&spec, &params, &x, &q).unwrap();
        assert_eq!(full.utilities_value().data(), informed.utilities_value().data());
    }

    #[test]
    fn fully_connected_zero_weights_zero_utilities() {
        let spec = toy_spec(ModelKind::FullyConnected);
        let mut params = ParameterSet::init(&spec, 0);
        for g in params.groups.iter_mut() {
            g.value = Array::zeros(g.value.shape());
        }
        let (x, q) = random_batch(4, &spec, 3);
        let g = build_utilities(&spec, &params, &x, &q, Mode::Eval, &BnState::new(3)).unwrap();
        assert!(g.utilities_value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fully_connected_hand_relu_composition() {
        // one hidden unit, identity-like weights: v = relu(x1 + x2 + q) * w_out
        let mut spec = ModelSpec::new(ModelKind::FullyConnected, 2, 1, 1);
        spec.hidden_units = 1;
        spec.hidden_layers = 1;
        let mut params = ParameterSet::init(&spec, 0);
        *params.get_mut("fc.w1").unwrap() =
            Array::from_vec(vec![3, 1], vec![1.0, 1.0, 1.0]).unwrap();
        *params.get_mut("fc.b1").unwrap() = Array::from_vec(vec![1, 1], vec![-1.0]).unwrap();
        *params.get_mut("fc.head_w").unwrap() =
            Array::from_vec(vec![1, 2], vec![2.0, -3.0]).unwrap();
        *params.get_mut("fc.head_b").unwrap() =
            Array::from_vec(vec![1, 2], vec![0.5, 0.0]).unwrap();
        let x = vec![
            Array::from_vec(vec![2, 1], vec![1.0, -4.0]).unwrap(),
            Array::from_vec(vec![2, 1], vec![2.0, 1.0]).unwrap(),
        ];
        let q = Array::from_vec(vec![2, 1], vec![0.5, 1.0]).unwrap();
        // row 0: relu(1 + 2 + 0.5 - 1) = 2.5 -> v = [5.5, -7.5]
        // row 1: relu(-4 + 1 + 1 - 1) = 0   -> v = [0.5, 0]
        let g = build_utilities(&spec, &params, &x, &q, Mode::Eval, &BnState::new(2)).unwrap();
        let v = g.utilities_value();
        assert_eq!(v.data(), &[5.5, -7.5, 0.5, 0.0]);
    }

    #[test]
    fn softmax_shift_invariance() {
        let u = Array::from_vec(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]).unwrap();
        let shifted = u.map(|v| v + 17.5);
        let p = choice_probabilities(&u).unwrap();
        let ps = choice_probabilities(&shifted).unwrap();
        for (a, b) in p.data().iter().zip(ps.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        for i in 0..2 {
            let s: f64 = (0..3).map(|c| p.get2(i, c)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn choice_probabilities_reject_nan() {
        let u = Array::from_vec(vec![1, 2], vec![f64::NAN, 0.0]).unwrap();
        assert!(matches!(
            choice_probabilities(&u),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn penalized_loss_uniform_and_penalty_terms() {
        // all-zero conditional logit: uniform probabilities, J=3, one term is ln 3
        let spec = toy_spec(ModelKind::ConditionalLogit);
        let params = ParameterSet::init(&spec, 0);
        let (x, q) = random_batch(1, &spec, 1);
        let loss = penalized_loss(&spec, &params, &x, &q, &[1], Mode::Eval, &BnState::new(3))
            .unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);

        // lambda_iia = 2, sigma_iia = 3 contributes (2/2) * 9 = 9 to the loss
        let mut pspec = toy_spec(ModelKind::Proposed);
        pspec.lambda_iia = 2.0;
        let mut pparams = ParameterSet::init(&pspec, 0);
        pparams.set_scalar("sigma_iia", 3.0);
        let (x, q) = random_batch(4, &pspec, 2);
        let with = penalized_loss(&pspec, &pparams, &x, &q, &[0, 1, 2, 0], Mode::Eval, &BnState::new(3)).unwrap();
        let mut zero_spec = pspec.clone();
        zero_spec.lambda_iia = 0.0;
        let without =
            penalized_loss(&zero_spec, &pparams, &x, &q, &[0, 1, 2, 0], Mode::Eval, &BnState::new(3))
                .unwrap();
        assert!((with - without - 9.0).abs() < 1e-12);
    }

    #[test]
    fn iia_ratio_invariance_without_noniia_block() {
        // sigma_noniia = 0: deleting an alternative leaves pairwise
        // probability ratios unchanged in eval mode
        let spec = toy_spec(ModelKind::Proposed);
        let mut params = ParameterSet::init(&spec, 21);
        params.set_scalar("sigma_iia", 0.9);
        params.set_scalar("sigma_noniia", 0.0);
        // give the informed part some signal
        params.get_mut("beta").unwrap().data_mut()[0] = -0.5;
        params.get_mut("beta").unwrap().data_mut()[1] = 0.3;
        let (x, q) = random_batch(4, &spec, 11);
        let bn = BnState::new(3);
        let g = build_utilities(&spec, &params, &x, &q, Mode::Eval, &bn).unwrap();
        let p = choice_probabilities(g.utilities_value()).unwrap();

        // drop alternative 2 and renormalize over {0, 1}
        for i in 0..4 {
            let full_ratio = p.get2(i, 0) / p.get2(i, 1);
            let renorm = p.get2(i, 0) + p.get2(i, 1);
            let r0 = p.get2(i, 0) / renorm;
            let r1 = p.get2(i, 1) / renorm;
            assert!((r0 / r1 - full_ratio).abs() < 1e-12);
        }
    }
}
