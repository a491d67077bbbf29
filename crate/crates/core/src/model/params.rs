//! Structured parameter container with named groups, freeze classes, and
//! bit-exact serialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::model::spec::{GammaMode, ModelKind, ModelSpec};

pub const PARAMS_VERSION: u32 = 1;

/// Freeze classes for the two-step procedure: the informed group holds
/// alpha, beta, gamma and the embedding networks; the nonlinear group holds
/// the f/g (or fully connected) networks and both scale parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamClass {
    Informed,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FreezeMask {
    pub informed: bool,
    pub nonlinear: bool,
}

impl FreezeMask {
    pub fn none() -> Self {
        FreezeMask::default()
    }

    pub fn nonlinear_frozen() -> Self {
        FreezeMask {
            informed: false,
            nonlinear: true,
        }
    }

    pub fn is_frozen(&self, class: ParamClass) -> bool {
        match class {
            ParamClass::Informed => self.informed,
            ParamClass::Nonlinear => self.nonlinear,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub class: ParamClass,
    /// Whether the global weight-decay penalty applies to this group
    /// (network weight matrices only; never biases, scales, or the
    /// informed coefficients).
    pub decay: bool,
    pub value: Array,
}

/// All model parameters as an ordered list of named groups.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterSet {
    pub version: u32,
    pub groups: Vec<ParamGroup>,
    pub frozen: FreezeMask,
}

impl ParameterSet {
    /// Initialize parameters for `spec`. Informed coefficients start at
    /// zero; network weights are ReLU-scaled Gaussian draws
    /// (std = sqrt(2 / fan_in)); biases start at zero; both scale
    /// parameters start at zero so the model begins at the informed
    /// hypothesis.
    pub fn init(spec: &ModelSpec, seed: u64) -> ParameterSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut groups = Vec::new();
        let (j, k_x, k_q) = (spec.j, spec.k_x, spec.k_q);
        let h = spec.hidden_units;
        let l = spec.hidden_layers;

        let mut push = |name: String, class: ParamClass, decay: bool, value: Array| {
            groups.push(ParamGroup {
                name,
                class,
                decay,
                value,
            });
        };

        let zeros = |r: usize, c: usize| Array::zeros(&[r, c]);
        let mut he = |rng: &mut ChaCha8Rng, fan_in: usize, r: usize, c: usize| {
            let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
            let data: Vec<f64> = (0..r * c).map(|_| dist.sample(rng)).collect();
            Array::from_vec(vec![r, c], data).unwrap()
        };

        match spec.kind {
            ModelKind::ConditionalLogit => {
                push("alpha".into(), ParamClass::Informed, false, zeros(j - 1, 1));
                push("beta".into(), ParamClass::Informed, false, zeros(k_x, 1));
                if k_q > 0 {
                    push("gamma".into(), ParamClass::Informed, false, zeros(k_q, j - 1));
                }
            }
            ModelKind::FullyConnected => {
                let d_in = j * k_x + k_q;
                let mut fan = d_in;
                for layer in 1..=l {
                    push(
                        format!("fc.w{}", layer),
                        ParamClass::Nonlinear,
                        true,
                        he(&mut rng, fan, fan, h),
                    );
                    push(
                        format!("fc.b{}", layer),
                        ParamClass::Nonlinear,
                        false,
                        zeros(1, h),
                    );
                    fan = h;
                }
                push(
                    "fc.head_w".into(),
                    ParamClass::Nonlinear,
                    true,
                    he(&mut rng, fan, fan, j),
                );
                push("fc.head_b".into(), ParamClass::Nonlinear, false, zeros(1, j));
            }
            ModelKind::Proposed => {
                push("alpha".into(), ParamClass::Informed, false, zeros(j - 1, 1));
                push("beta".into(), ParamClass::Informed, false, zeros(k_x, 1));
                match spec.gamma_mode {
                    GammaMode::Embedding => {
                        push("gamma".into(), ParamClass::Informed, false, zeros(k_q, 1))
                    }
                    GammaMode::BaseZero => {
                        push("gamma".into(), ParamClass::Informed, false, zeros(k_q, j - 1))
                    }
                }
                let e = spec.embed_units();
                for alt in 0..j {
                    push(
                        format!("embed{}.w1", alt),
                        ParamClass::Informed,
                        true,
                        he(&mut rng, k_q, k_q, e),
                    );
                    push(
                        format!("embed{}.b1", alt),
                        ParamClass::Informed,
                        false,
                        zeros(1, e),
                    );
                    push(
                        format!("embed{}.w2", alt),
                        ParamClass::Informed,
                        true,
                        he(&mut rng, e, e, k_q),
                    );
                    push(
                        format!("embed{}.b2", alt),
                        ParamClass::Informed,
                        false,
                        zeros(1, k_q),
                    );
                }
                let d_f = k_x + k_q;
                let mut fan = d_f;
                for layer in 1..=l {
                    push(
                        format!("f.w{}", layer),
                        ParamClass::Nonlinear,
                        true,
                        he(&mut rng, fan, fan, h),
                    );
                    push(format!("f.b{}", layer), ParamClass::Nonlinear, false, zeros(1, h));
                    fan = h;
                }
                push(
                    "f.head_w".into(),
                    ParamClass::Nonlinear,
                    true,
                    he(&mut rng, fan, fan, 1),
                );
                push("f.head_b".into(), ParamClass::Nonlinear, false, zeros(1, 1));

                let d_g = j * k_x + k_q;
                fan = d_g;
                for layer in 1..=l {
                    push(
                        format!("g.w{}", layer),
                        ParamClass::Nonlinear,
                        true,
                        he(&mut rng, fan, fan, h),
                    );
                    push(format!("g.b{}", layer), ParamClass::Nonlinear, false, zeros(1, h));
                    fan = h;
                }
                push(
                    "g.head_w".into(),
                    ParamClass::Nonlinear,
                    true,
                    he(&mut rng, fan, fan, j),
                );
                push("g.head_b".into(), ParamClass::Nonlinear, false, zeros(1, j));

                push(
                    "sigma_iia".into(),
                    ParamClass::Nonlinear,
                    false,
                    Array::scalar(0.0),
                );
                push(
                    "sigma_noniia".into(),
                    ParamClass::Nonlinear,
                    false,
                    Array::scalar(0.0),
                );
            }
        }

        ParameterSet {
            version: PARAMS_VERSION,
            groups,
            frozen: FreezeMask::none(),
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.groups.iter().find(|g| g.name == name).map(|g| &g.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array> {
        self.groups
            .iter_mut()
            .find(|g| g.name == name)
            .map(|g| &mut g.value)
    }

    pub fn set_scalar(&mut self, name: &str, v: f64) {
        if let Some(a) = self.get_mut(name) {
            *a = Array::scalar(v);
        }
    }

    /// Total number of scalar parameters.
    pub fn n_values(&self) -> usize {
        self.groups.iter().map(|g| g.value.len()).sum()
    }

    /// Bit-exact JSON snapshot (shortest-round-trip float formatting).
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("parameters serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: ParameterSet = serde_json::from_str(text)?;
        if p.version != PARAMS_VERSION {
            return Err(Error::Version {
                what: "parameters",
                found: p.version,
                expected: PARAMS_VERSION,
            });
        }
        Ok(p)
    }
}

/// Running batch-norm statistics for one normalization layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnStats {
    /// Conventional initialization: zero mean, unit variance.
    pub fn identity(features: usize) -> Self {
        BnStats {
            mean: vec![0.0; features],
            var: vec![1.0; features],
        }
    }
}

/// Running statistics for the proposed architecture's two batch-norm layers
/// (each normalizes J columns over the batch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnState {
    pub f: BnStats,
    pub g: BnStats,
}

impl BnState {
    pub fn new(j: usize) -> Self {
        BnState {
            f: BnStats::identity(j),
            g: BnStats::identity(j),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ModelSpec {
        let mut s = ModelSpec::new(ModelKind::Proposed, 3, 5, 5);
        s.hidden_units = 8;
        s.hidden_layers = 2;
        s
    }

    #[test]
    fn init_is_deterministic_and_informed_starts_at_zero() {
        let a = ParameterSet::init(&spec(), 42);
        let b = ParameterSet::init(&spec(), 42);
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.get("beta").unwrap().data().iter().all(|&v| v == 0.0));
        assert!(a.get("alpha").unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(a.get("sigma_iia").unwrap().scalar_value(), 0.0);
        let c = ParameterSet::init(&spec(), 43);
        assert_ne!(a.to_json(), c.to_json());
    }

    #[test]
    fn serialization_round_trips_bit_exactly() {
        let mut p = ParameterSet::init(&spec(), 7);
        // nasty values: subnormals-ish, long mantissas
        p.set_scalar("sigma_iia", 0.1 + 1e-17);
        p.get_mut("beta").unwrap().data_mut()[0] = f64::from_bits(0x3FF0_0000_0000_0001);
        let json = p.to_json();
        let q = ParameterSet::from_json(&json).unwrap();
        for (g1, g2) in p.groups.iter().zip(&q.groups) {
            assert_eq!(g1.name, g2.name);
            for (a, b) in g1.value.data().iter().zip(g2.value.data()) {
                assert_eq!(a.to_bits(), b.to_bits(), "group {}", g1.name);
            }
        }
    }

    #[test]
    fn freeze_classes_cover_the_spec_grouping() {
        let p = ParameterSet::init(&spec(), 1);
        for g in &p.groups {
            let expect = if g.name.starts_with("f.")
                || g.name.starts_with("g.")
                || g.name.starts_with("sigma")
            {
                ParamClass::Nonlinear
            } else {
                ParamClass::Informed
            };
            assert_eq!(g.class, expect, "group {}", g.name);
        }
    }
}
