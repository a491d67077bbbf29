//! Sampler configuration and the step-size schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Configuration for the two-step procedure.
///
/// The phase-2 step size follows the polynomial decay
/// `alpha_t = a * (b + t)^(-gamma_decay)`. For datasets of size N a good
/// starting point is `a` of order `1/N`: the update then moves parameters on
/// the scale of the posterior standard deviation rather than the prior's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgldConfig {
    /// Schedule scale.
    pub a: f64,
    /// Schedule offset.
    pub b: f64,
    /// Schedule decay exponent, in [0, 1].
    pub gamma_decay: f64,
    pub batch_size: usize,
    pub phase1_max_epochs: usize,
    /// Stop phase 1 once the relative epoch-loss improvement drops below this.
    pub phase1_tolerance: f64,
    pub phase2_epochs: usize,
    /// Fraction of phase-2 epochs discarded as burn-in, in [0, 1).
    pub burn_in_fraction: f64,
    /// Keep every `thin`-th post-burn-in snapshot.
    pub thin: usize,
    pub seed: u64,
    /// Phase-1 learning rate; defaults to `a` when absent.
    #[serde(default)]
    pub phase1_lr: Option<f64>,
    /// Phase-1 SGD momentum.
    #[serde(default = "default_momentum")]
    pub phase1_momentum: f64,
    /// Multiplier on the injected noise standard deviation. 1 is SGLD;
    /// 0 degenerates to plain gradient ascent (used by tests).
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    /// Momentum of the batch-norm running-statistics update.
    #[serde(default = "default_bn_momentum")]
    pub bn_momentum: f64,
    /// Snapshot after every step instead of once per epoch.
    #[serde(default)]
    pub snapshot_per_batch: bool,
}

fn default_momentum() -> f64 {
    0.9
}

fn default_noise_scale() -> f64 {
    1.0
}

fn default_bn_momentum() -> f64 {
    0.1
}

impl SgldConfig {
    /// Defaults for a dataset of `n` observations: `a = 1e-3 / n`, `b = 10`,
    /// `gamma_decay = 0.55`, burn-in half, thinning 5.
    pub fn defaults_for(n: usize, seed: u64) -> Self {
        SgldConfig {
            a: 1e-3 / n.max(1) as f64,
            b: 10.0,
            gamma_decay: 0.55,
            batch_size: 256,
            phase1_max_epochs: 200,
            phase1_tolerance: 1e-6,
            phase2_epochs: 5000,
            burn_in_fraction: 0.5,
            thin: 5,
            seed,
            phase1_lr: None,
            phase1_momentum: default_momentum(),
            noise_scale: default_noise_scale(),
            bn_momentum: default_bn_momentum(),
            snapshot_per_batch: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) {
            return Err(Error::Config("schedule scale a must be positive".into()));
        }
        if self.b < 0.0 {
            return Err(Error::Config("schedule offset b must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma_decay) {
            return Err(Error::Config("gamma_decay must lie in [0, 1]".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::Config("burn_in_fraction must lie in [0, 1)".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.noise_scale < 0.0 {
            return Err(Error::Config("noise_scale must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::Config("bn_momentum must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn phase1_step(&self) -> f64 {
        self.phase1_lr.unwrap_or(self.a)
    }
}

/// `alpha_t = a * (b + t)^(-gamma_decay)`.
pub fn step_size(a: f64, b: f64, gamma_decay: f64, t: usize) -> f64 {
    a * (b + t as f64).powf(-gamma_decay)
}

/// Deterministic stream splitting: one master seed, many independent
/// sub-seeds (SplitMix64 over `seed ^ golden * tag`).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_formula() {
        // a=0.01, b=1, gamma=0.5, t=3 -> 0.01 * 4^-0.5 = 0.005
        let alpha = step_size(0.01, 1.0, 0.5, 3);
        assert!((alpha - 0.005).abs() < 1e-15);
        // gamma=0 -> constant a
        assert_eq!(step_size(0.2, 7.0, 0.0, 123), 0.2);
    }

    #[test]
    fn derived_seeds_differ() {
        let s1 = derive_seed(42, 1);
        let s2 = derive_seed(42, 2);
        let s3 = derive_seed(43, 1);
        assert_ne!(s1, s2);
        assert_ne!(s1, s3);
        assert_eq!(s1, derive_seed(42, 1));
    }

    #[test]
    fn validation_catches_bad_fields() {
        let mut c = SgldConfig::defaults_for(1000, 1);
        assert!(c.validate().is_ok());
        c.thin = 0;
        assert!(c.validate().is_err());
        c.thin = 5;
        c.burn_in_fraction = 1.0;
        assert!(c.validate().is_err());
    }
}
