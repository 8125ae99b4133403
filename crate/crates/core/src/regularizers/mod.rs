//! Latent-attribution penalty terms, pair subsampling, and the baseline
//! regularizers composed by the trainer.

mod augment;
pub mod batchnorm;
mod tangos;
mod weight;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use augment::{apply_dropout, apply_input_noise, apply_mixup, apply_mixup_with, dropout_mask};
pub use batchnorm::{BatchNorm, BnCache};
pub use tangos::{
    draw_pair_sets, orth_loss_full, orth_loss_subsampled, orth_sample, pair_correlation,
    pair_correlation_grad, pair_correlation_grad_acc, pair_correlation_grad_acc_normed,
    pair_correlation_normed, pair_count, pair_from_index, spec_loss, spec_sample,
};
pub use weight::weight_penalty;

pub const DEFAULT_EPSILON: f64 = 1e-12;
pub const DEFAULT_PAIRS: usize = 50;
pub const DEFAULT_MIXUP_ALPHA: f64 = 0.2;

/// How many neuron pairs enter the orthogonalization term per sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PairsRepr", into = "PairsRepr")]
pub enum PairCount {
    All,
    Count(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PairsRepr {
    Count(usize),
    Word(String),
}

impl TryFrom<PairsRepr> for PairCount {
    type Error = String;

    fn try_from(r: PairsRepr) -> std::result::Result<Self, String> {
        match r {
            PairsRepr::Count(m) => Ok(PairCount::Count(m)),
            PairsRepr::Word(w) if w.eq_ignore_ascii_case("all") => Ok(PairCount::All),
            PairsRepr::Word(w) => Err(format!("pairs must be a count or \"all\", got \"{w}\"")),
        }
    }
}

impl From<PairCount> for PairsRepr {
    fn from(p: PairCount) -> Self {
        match p {
            PairCount::All => PairsRepr::Word("all".into()),
            PairCount::Count(m) => PairsRepr::Count(m),
        }
    }
}

impl PairCount {
    /// Pairs actually drawn for a layer of width `d_h`. Counts above the
    /// number of available pairs fall back to exhaustive enumeration.
    pub fn resolve(self, d_h: usize) -> usize {
        let c = pair_count(d_h);
        match self {
            PairCount::All => c,
            PairCount::Count(m) => m.min(c),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TangosConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    #[serde(default = "default_pairs")]
    pub pairs: PairCount,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_pairs() -> PairCount {
    PairCount::Count(DEFAULT_PAIRS)
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl Default for TangosConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            pairs: default_pairs(),
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl TangosConfig {
    pub fn new(lambda1: f64, lambda2: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            ..Self::default()
        }
    }

    pub fn with_pairs(mut self, pairs: PairCount) -> Self {
        self.pairs = pairs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "tangos.{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "tangos.epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.pairs == PairCount::Count(0) {
            return Err(Error::Config("tangos.pairs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineRegConfig {
    pub l1_lambda: f64,
    pub l2_lambda: f64,
    pub dropout_p: f64,
    pub input_noise_sd: f64,
    pub mixup_enabled: bool,
    pub mixup_alpha: f64,
    pub batchnorm_enabled: bool,
}

impl Default for BaselineRegConfig {
    fn default() -> Self {
        Self {
            l1_lambda: 0.0,
            l2_lambda: 0.0,
            dropout_p: 0.0,
            input_noise_sd: 0.0,
            mixup_enabled: false,
            mixup_alpha: DEFAULT_MIXUP_ALPHA,
            batchnorm_enabled: false,
        }
    }
}

impl BaselineRegConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("l1_lambda", self.l1_lambda),
            ("l2_lambda", self.l2_lambda),
            ("input_noise_sd", self.input_noise_sd),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "baselines.{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "baselines.dropout_p must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if !(self.mixup_alpha > 0.0 && self.mixup_alpha.is_finite()) {
            return Err(Error::Config(format!(
                "baselines.mixup_alpha must be > 0, got {}",
                self.mixup_alpha
            )));
        }
        Ok(())
    }

    pub fn is_inactive(&self) -> bool {
        self.l1_lambda == 0.0
            && self.l2_lambda == 0.0
            && self.dropout_p == 0.0
            && self.input_noise_sd == 0.0
            && !self.mixup_enabled
            && !self.batchnorm_enabled
    }
}
