use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{minibatches, Dataset, Task};
use crate::error::{Error, Result};
use crate::model::{
    freeze_simplex_bias, init_model, penalty_value_and_grads, task_loss, MlpModel, TargetBatch,
    TrainMode,
};
use crate::numeric::SeededRng;
use crate::regularizers::{
    apply_input_noise, apply_mixup, weight_penalty, BaselineRegConfig, TangosConfig,
};

use super::adam::{adam_step, OptimizerState};

pub const DEFAULT_MAX_EPOCHS: usize = 200;
pub const DEFAULT_PATIENCE: usize = 30;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_LEARNING_RATE: f64 = 0.001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden_layers: usize,
    /// Width of every hidden layer; `None` means input width + 1.
    pub hidden_width: Option<usize>,
    /// Hidden layer whose activations are regularized; `None` means the
    /// last one.
    pub attribution_layer: Option<usize>,
    /// Sum-to-one output weights without bias (regression only).
    pub simplex_head: bool,
    pub tangos: Option<TangosConfig>,
    pub baselines: BaselineRegConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: DEFAULT_BATCH_SIZE,
            hidden_layers: 2,
            hidden_width: None,
            attribution_layer: None,
            simplex_head: false,
            tangos: None,
            baselines: BaselineRegConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience must be in 1..=max_epochs ({}), got {}",
                self.max_epochs, self.patience
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.hidden_layers == 0 || self.hidden_width == Some(0) {
            return Err(Error::Config(
                "need at least one hidden layer of nonzero width".into(),
            ));
        }
        if let Some(a) = self.attribution_layer {
            if a >= self.hidden_layers {
                return Err(Error::Config(format!(
                    "attribution_layer {a} is not one of {} hidden layers",
                    self.hidden_layers
                )));
            }
        }
        if let Some(t) = &self.tangos {
            t.validate()?;
        }
        self.baselines.validate()
    }

    pub fn widths(&self, d_x: usize, d_out: usize) -> Vec<usize> {
        let w = self.hidden_width.unwrap_or(d_x + 1);
        let mut widths = vec![d_x];
        widths.extend(std::iter::repeat_n(w, self.hidden_layers));
        widths.push(d_out);
        widths
    }
}

/// Fresh model for `dataset` under `cfg`.
pub fn build_model(dataset: &Dataset, cfg: &TrainConfig) -> Result<MlpModel> {
    let widths = cfg.widths(dataset.n_features(), dataset.output_width());
    let mut model = init_model(&widths, cfg.seed)?;
    if let Some(a) = cfg.attribution_layer {
        model = model.with_attribution_layer(a)?;
    }
    if cfg.simplex_head {
        if dataset.task != Task::Regression {
            return Err(Error::UnsupportedTask(
                "a simplex output head is defined for regression only".into(),
            ));
        }
        model = model.with_simplex_head()?;
    }
    if cfg.baselines.batchnorm_enabled {
        model = model.with_batch_norm();
    }
    Ok(model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub l_spec: Option<f64>,
    pub l_orth: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: MlpModel,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// `epoch,train_loss,val_loss,L_spec,L_orth`; absent values are empty.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,L_spec,L_orth\n");
    for r in history {
        out.push_str(&format!(
            "{},{:?},{},{},{}\n",
            r.epoch,
            r.train_loss,
            opt(r.val_loss),
            opt(r.l_spec),
            opt(r.l_orth)
        ));
    }
    out
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(history_csv(history).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Mean task loss (MSE or NLL) using the inference forward pass.
pub fn evaluate(model: &MlpModel, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Domain("cannot evaluate on an empty set".into()));
    }
    let targets = TargetBatch::from_labels(&dataset.y, dataset.task, dataset.n_classes)?;
    let (pred, _) = model.forward(&dataset.x)?;
    Ok(task_loss(&pred, &targets)?.0)
}

/// Called after every epoch with the record and the current parameters.
pub type EpochMonitor<'a> = dyn FnMut(&EpochRecord, &MlpModel) -> Result<()> + 'a;

pub fn fit(
    dataset: &Dataset,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<FitResult> {
    fit_with_monitor(dataset, train_idx, val_idx, cfg, &mut |_, _| Ok(()))
}

pub fn fit_with_monitor(
    dataset: &Dataset,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
    monitor: &mut EpochMonitor<'_>,
) -> Result<FitResult> {
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::Config(
            "training and validation sets must be nonempty".into(),
        ));
    }
    let mut seen = vec![false; dataset.len()];
    for &i in train_idx {
        if i >= dataset.len() {
            return Err(Error::Config(format!("training index {i} out of range")));
        }
        seen[i] = true;
    }
    if let Some(&i) = val_idx.iter().find(|&&i| i >= dataset.len() || seen[i]) {
        return Err(Error::Config(format!(
            "validation index {i} is out of range or also used for training"
        )));
    }
    let val = dataset.subset(val_idx);
    train_loop(dataset, train_idx, Some(&val), cfg, cfg.max_epochs, monitor)
}

/// Trains for exactly `epochs` epochs without validation and returns the
/// final parameters.
pub fn fit_fixed_epochs(
    dataset: &Dataset,
    train_idx: &[usize],
    epochs: usize,
    cfg: &TrainConfig,
) -> Result<FitResult> {
    if train_idx.is_empty() || epochs == 0 {
        return Err(Error::Config(
            "need training rows and at least one epoch".into(),
        ));
    }
    train_loop(dataset, train_idx, None, cfg, epochs, &mut |_, _| Ok(()))
}

struct Streams {
    shuffle: SeededRng,
    dropout: SeededRng,
    noise: SeededRng,
    mixup: SeededRng,
    pairs: SeededRng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let root = SeededRng::new(seed);
        Self {
            shuffle: root.split("shuffle"),
            dropout: root.split("dropout"),
            noise: root.split("noise"),
            mixup: root.split("mixup"),
            pairs: root.split("pairs"),
        }
    }
}

fn train_loop(
    dataset: &Dataset,
    train_idx: &[usize],
    val: Option<&Dataset>,
    cfg: &TrainConfig,
    epochs: usize,
    monitor: &mut EpochMonitor<'_>,
) -> Result<FitResult> {
    cfg.validate()?;
    let mut model = build_model(dataset, cfg)?;
    let mut opt = OptimizerState::new(&model, cfg.learning_rate);
    let mut rng = Streams::new(cfg.seed);
    let base = &cfg.baselines;

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, MlpModel)> = None;
    let mut since_best = 0;

    for epoch in 1..=epochs {
        let batches = minibatches(dataset, train_idx, cfg.batch_size, &mut rng.shuffle)?;
        let (mut loss_sum, mut spec_sum, mut orth_sum, mut rows) = (0.0, 0.0, 0.0, 0usize);
        let mut orth_seen = false;
        for batch in batches {
            let n = batch.y.len();
            if base.batchnorm_enabled && n < 2 {
                // batch statistics are undefined for a single row
                continue;
            }
            let mut x = batch.x;
            if base.input_noise_sd > 0.0 {
                x = apply_input_noise(&x, base.input_noise_sd, &mut rng.noise)?;
            }
            let targets = if base.mixup_enabled {
                let (mixed, t) = apply_mixup(
                    &x,
                    &batch.y,
                    base.mixup_alpha,
                    &mut rng.mixup,
                    dataset.task,
                    dataset.n_classes,
                )?;
                x = mixed;
                t
            } else {
                TargetBatch::from_labels(&batch.y, dataset.task, dataset.n_classes)?
            };

            let (pred, trace) = model.forward_train(
                &x,
                TrainMode {
                    dropout_p: base.dropout_p,
                    rng: &mut rng.dropout,
                },
            )?;
            let (loss, dpred) = task_loss(&pred, &targets)?;
            let mut grads = model.backward(&trace, &dpred)?;

            if let Some(tcfg) = &cfg.tangos {
                let pen = penalty_value_and_grads(&model, &trace, tcfg, &mut rng.pairs)?;
                grads.add_assign(&pen.grads)?;
                spec_sum += pen.spec * n as f64;
                if let Some(o) = pen.orth {
                    orth_sum += o * n as f64;
                    orth_seen = true;
                }
            }
            if base.l1_lambda > 0.0 || base.l2_lambda > 0.0 {
                let (_, wg) = weight_penalty(&model, base.l1_lambda, base.l2_lambda);
                grads.add_assign(&wg)?;
            }
            freeze_simplex_bias(&model, &mut grads);
            model.update_running_stats(&trace);
            adam_step(&mut opt, &mut model, &grads)?;

            loss_sum += loss * n as f64;
            rows += n;
        }
        if rows == 0 {
            return Err(Error::DegenerateData(
                "no usable training batch in an epoch".into(),
            ));
        }
        let rows_f = rows as f64;
        let val_loss = val.map(|v| evaluate(&model, v)).transpose()?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / rows_f,
            val_loss,
            l_spec: cfg.tangos.map(|_| spec_sum / rows_f),
            l_orth: orth_seen.then(|| orth_sum / rows_f),
        };
        monitor(&record, &model)?;
        history.push(record);

        if let Some(v) = val_loss {
            let v = if v.is_finite() { v } else { f64::INFINITY };
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
    }

    // without validation the final parameters are kept
    let (best_val_loss, best_epoch, model) = best.unwrap_or((f64::NAN, history.len(), model));
    Ok(FitResult {
        model,
        best_val_loss,
        best_epoch,
        history,
    })
}
