//! Named regularization methods and their hyperparameter grids.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regularizers::TangosConfig;

use super::fit::TrainConfig;

pub const LEARNING_RATES: [f64; 3] = [0.01, 0.001, 0.0001];
pub const WEIGHT_LAMBDAS: [f64; 3] = [0.1, 0.01, 0.001];
pub const DROPOUT_RATES: [f64; 3] = [0.1, 0.25, 0.5];
pub const NOISE_SDS: [f64; 3] = [0.1, 0.05, 0.01];
pub const SPEC_LAMBDAS: [f64; 3] = [1.0, 10.0, 100.0];
pub const ORTH_LAMBDAS: [f64; 2] = [0.1, 1.0];

/// A stand-alone regularizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Base {
    Baseline,
    L1,
    L2,
    Dropout,
    BatchNorm,
    InputNoise,
    Mixup,
    Tangos,
    SpecOnly,
    OrthOnly,
}

impl Base {
    pub const ALL: [Base; 10] = [
        Base::Baseline,
        Base::L1,
        Base::L2,
        Base::Dropout,
        Base::BatchNorm,
        Base::InputNoise,
        Base::Mixup,
        Base::Tangos,
        Base::SpecOnly,
        Base::OrthOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Base::Baseline => "baseline",
            Base::L1 => "L1",
            Base::L2 => "L2",
            Base::Dropout => "DO",
            Base::BatchNorm => "BN",
            Base::InputNoise => "IN",
            Base::Mixup => "MU",
            Base::Tangos => "TANGOS",
            Base::SpecOnly => "SpecOnly",
            Base::OrthOnly => "OrthOnly",
        }
    }

    fn is_attribution(self) -> bool {
        matches!(self, Base::Tangos | Base::SpecOnly | Base::OrthOnly)
    }
}

/// A method name from the benchmark vocabulary, e.g. `L2` or `TANGOS+DO`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Single(Base),
    /// The attribution penalty searched jointly with one baseline regularizer.
    Tandem(Base),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Single(b) => f.write_str(b.name()),
            Method::Tandem(b) => write!(f, "TANGOS+{}", b.name()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let find = |name: &str| {
            Base::ALL
                .into_iter()
                .find(|b| b.name().eq_ignore_ascii_case(name.trim()))
        };
        let unknown = || {
            let names: Vec<_> = Base::ALL.iter().map(|b| b.name()).collect();
            Error::Config(format!(
                "unknown method '{s}' (expected one of {} or TANGOS+<baseline>)",
                names.join(", ")
            ))
        };
        if let Some((a, b)) = s.split_once('+') {
            let (a, b) = (find(a).ok_or_else(unknown)?, find(b).ok_or_else(unknown)?);
            let other = match (a, b) {
                (Base::Tangos, o) | (o, Base::Tangos) => o,
                _ => return Err(unknown()),
            };
            if other.is_attribution() || other == Base::Baseline {
                return Err(unknown());
            }
            return Ok(Method::Tandem(other));
        }
        find(s).map(Method::Single).ok_or_else(unknown)
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Grid values of one regularizer, applied on top of a config.
fn base_variants(b: Base, cfg: &TrainConfig) -> Vec<TrainConfig> {
    let with = |f: &dyn Fn(&mut TrainConfig)| {
        let mut c = cfg.clone();
        f(&mut c);
        c
    };
    let tangos = |l1: f64, l2: f64| {
        let mut t = cfg.tangos.unwrap_or_default();
        t.lambda1 = l1;
        t.lambda2 = l2;
        Some(t)
    };
    match b {
        Base::Baseline => vec![cfg.clone()],
        Base::L1 => WEIGHT_LAMBDAS
            .iter()
            .map(|&l| with(&|c| c.baselines.l1_lambda = l))
            .collect(),
        Base::L2 => WEIGHT_LAMBDAS
            .iter()
            .map(|&l| with(&|c| c.baselines.l2_lambda = l))
            .collect(),
        Base::Dropout => DROPOUT_RATES
            .iter()
            .map(|&p| with(&|c| c.baselines.dropout_p = p))
            .collect(),
        Base::BatchNorm => vec![with(&|c| c.baselines.batchnorm_enabled = true)],
        Base::InputNoise => NOISE_SDS
            .iter()
            .map(|&s| with(&|c| c.baselines.input_noise_sd = s))
            .collect(),
        Base::Mixup => vec![with(&|c| c.baselines.mixup_enabled = true)],
        Base::Tangos => SPEC_LAMBDAS
            .iter()
            .flat_map(|&l1| ORTH_LAMBDAS.iter().map(move |&l2| (l1, l2)))
            .map(|(l1, l2)| with(&|c| c.tangos = tangos(l1, l2)))
            .collect(),
        Base::SpecOnly => SPEC_LAMBDAS
            .iter()
            .map(|&l1| with(&|c| c.tangos = tangos(l1, 0.0)))
            .collect(),
        Base::OrthOnly => ORTH_LAMBDAS
            .iter()
            .map(|&l2| with(&|c| c.tangos = tangos(0.0, l2)))
            .collect(),
    }
}

/// Cross product of the method's grid with the learning-rate grid, on top
/// of `base`. Order: method values outermost, learning rate innermost.
pub fn method_grid(method: Method, base: &TrainConfig) -> Vec<TrainConfig> {
    let variants = match method {
        Method::Single(b) => base_variants(b, base),
        Method::Tandem(b) => base_variants(Base::Tangos, base)
            .iter()
            .flat_map(|c| base_variants(b, c))
            .collect(),
    };
    variants
        .into_iter()
        .flat_map(|c| {
            LEARNING_RATES.iter().map(move |&lr| TrainConfig {
                learning_rate: lr,
                ..c.clone()
            })
        })
        .collect()
}

pub fn method_grid_named(method: &str, base: &TrainConfig) -> Result<Vec<TrainConfig>> {
    Ok(method_grid(method.parse()?, base))
}

/// Hyperparameters of a grid point in results-table form.
#[derive(Clone, Debug, PartialEq)]
pub struct GridLabel {
    pub lr: f64,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    /// Baseline regularizer settings, e.g. `l2=0.01;dropout=0.25`.
    pub extra: String,
}

pub fn grid_label(cfg: &TrainConfig) -> GridLabel {
    let b = &cfg.baselines;
    let mut extra = Vec::new();
    if b.l1_lambda > 0.0 {
        extra.push(format!("l1={}", b.l1_lambda));
    }
    if b.l2_lambda > 0.0 {
        extra.push(format!("l2={}", b.l2_lambda));
    }
    if b.dropout_p > 0.0 {
        extra.push(format!("dropout={}", b.dropout_p));
    }
    if b.input_noise_sd > 0.0 {
        extra.push(format!("noise={}", b.input_noise_sd));
    }
    if b.mixup_enabled {
        extra.push(format!("mixup_alpha={}", b.mixup_alpha));
    }
    if b.batchnorm_enabled {
        extra.push("batchnorm".into());
    }
    let t: Option<TangosConfig> = cfg.tangos;
    GridLabel {
        lr: cfg.learning_rate,
        lambda1: t.map(|t| t.lambda1),
        lambda2: t.map(|t| t.lambda2),
        extra: extra.join(";"),
    }
}
