//! ReLU multilayer perceptron with traced forward passes, reverse-mode
//! parameter gradients and analytic input Jacobians of a latent layer.

mod attribution;
mod checkpoint;
mod fd;
mod grads;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, SeededRng};
use crate::regularizers::batchnorm::{
    batchnorm_backward, batchnorm_forward_eval, batchnorm_forward_train, BatchNorm, BnCache,
};
use crate::regularizers::dropout_mask;

pub use attribution::{
    attribution_jacobian, penalty_value_and_grads, penalty_value_and_grads_with, AttributionMatrix,
    PenaltyOutput,
};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT};
pub use fd::fd_oracle;
pub use grads::ParamGrads;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out × in`.
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputConstraint {
    #[default]
    None,
    /// Output weights are `softmax(φ)` over the stored row `φ`, and the
    /// output bias is fixed at zero.
    Simplex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
    /// Index among hidden layers (0-based) whose post-activation is `h`.
    pub attribution_layer: usize,
    #[serde(default)]
    pub output_constraint: OutputConstraint,
    /// Empty, or one per hidden layer.
    #[serde(default)]
    pub batch_norm: Vec<BatchNorm>,
}

/// Caches from one forward pass over a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub input: DenseMatrix,
    /// Linear outputs `z_l`, one per layer.
    pub pre_activations: Vec<DenseMatrix>,
    /// ReLU inputs per hidden layer (`z_l`, or its batch-normalized form).
    pub relu_inputs: Vec<DenseMatrix>,
    /// Batch-norm caches, one per hidden layer when enabled.
    pub batch_norm: Vec<BnCache>,
    /// `1` where the ReLU input is strictly positive, per hidden layer.
    pub relu_masks: Vec<DenseMatrix>,
    /// Inverted-dropout multipliers per hidden layer (training only).
    pub dropout: Vec<Option<DenseMatrix>>,
    /// Per-sample diagonal of `∂a_l/∂z_l`: ReLU mask × dropout multiplier ×
    /// batch-norm scale.
    pub gains: Vec<DenseMatrix>,
    /// Post-activations per layer; the last entry is the prediction.
    pub activations: Vec<DenseMatrix>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    pub fn predictions(&self) -> &DenseMatrix {
        self.activations.last().expect("trace has an output layer")
    }

    /// Post-activations of hidden layer `l`.
    pub fn hidden(&self, l: usize) -> &DenseMatrix {
        &self.activations[l]
    }

    /// Smallest distance of any hidden ReLU input from the kink at zero.
    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        self.relu_inputs
            .iter()
            .flat_map(|m| m.as_slice())
            .fold(f64::INFINITY, |acc, v| acc.min(v.abs()))
    }
}

/// Training-time stochastic layers for [`MlpModel::forward_train`].
pub struct TrainMode<'a> {
    pub dropout_p: f64,
    pub rng: &'a mut SeededRng,
}

/// Targets for the task loss.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetBatch {
    Regression(Vec<f64>),
    Classes(Vec<usize>),
    /// `λ·CE(first) + (1−λ)·CE(second)`, from mixup.
    MixedClasses {
        first: Vec<usize>,
        second: Vec<usize>,
        lambda: f64,
    },
}

impl TargetBatch {
    pub fn from_labels(y: &[f64], task: Task, n_classes: usize) -> Result<Self> {
        match task {
            Task::Regression => Ok(Self::Regression(y.to_vec())),
            Task::Classification => {
                let mut classes = Vec::with_capacity(y.len());
                for &v in y {
                    if v < 0.0 || v.fract() != 0.0 || v as usize >= n_classes {
                        return Err(Error::Label {
                            index: v.max(0.0) as usize,
                            n_classes,
                        });
                    }
                    classes.push(v as usize);
                }
                Ok(Self::Classes(classes))
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            Self::Regression(v) => v.len(),
            Self::Classes(c) => c.len(),
            Self::MixedClasses { first, .. } => first.len(),
        }
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Softmax of a free parameter row, normalized explicitly so the weights
/// sum to one up to rounding.
pub fn simplex_weights(phi: &[f64]) -> Vec<f64> {
    let mut alpha = phi.to_vec();
    softmax_in_place(&mut alpha);
    alpha
}

/// Mean task loss and its gradient with respect to the predictions.
pub fn task_loss(pred: &DenseMatrix, targets: &TargetBatch) -> Result<(f64, DenseMatrix)> {
    let b = pred.rows();
    if b == 0 || targets.len() != b {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            b,
            targets.len()
        )));
    }
    let bf = b as f64;
    let mut grad = DenseMatrix::zeros(b, pred.cols());
    let mut total = 0.0;
    match targets {
        TargetBatch::Regression(y) => {
            if pred.cols() != 1 {
                return Err(Error::Shape(format!(
                    "regression expects one output, model has {}",
                    pred.cols()
                )));
            }
            for (i, &t) in y.iter().enumerate() {
                let r = pred.get(i, 0) - t;
                total += r * r;
                grad.set(i, 0, 2.0 * r / bf);
            }
        }
        TargetBatch::Classes(_) | TargetBatch::MixedClasses { .. } => {
            let k = pred.cols();
            let (first, second, lambda) = match targets {
                TargetBatch::Classes(c) => (c, c, 1.0),
                TargetBatch::MixedClasses {
                    first,
                    second,
                    lambda,
                } => (first, second, *lambda),
                TargetBatch::Regression(_) => unreachable!(),
            };
            for i in 0..b {
                for &c in [first[i], second[i]].iter() {
                    if c >= k {
                        return Err(Error::Label {
                            index: c,
                            n_classes: k,
                        });
                    }
                }
                let logits = pred.row(i);
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                total +=
                    lambda * (lse - logits[first[i]]) + (1.0 - lambda) * (lse - logits[second[i]]);
                let mut p = logits.to_vec();
                softmax_in_place(&mut p);
                p[first[i]] -= lambda;
                p[second[i]] -= 1.0 - lambda;
                for (g, v) in grad.row_mut(i).iter_mut().zip(p) {
                    *g = v / bf;
                }
            }
        }
    }
    Ok((total / bf, grad))
}

/// `widths = [d_X, hidden..., d_out]`; Kaiming-uniform weights with bound
/// `sqrt(6 / fan_in)`, zero biases.
pub fn init_model(widths: &[usize], seed: u64) -> Result<MlpModel> {
    if widths.len() < 3 {
        return Err(Error::Config(format!(
            "need input, at least one hidden and an output width, got {widths:?}"
        )));
    }
    if let Some(pos) = widths.iter().position(|&w| w == 0) {
        return Err(Error::Config(format!("layer {pos} has zero width")));
    }
    let mut rng = SeededRng::new(seed).split("init");
    let layers = widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            DenseLayer {
                weights: DenseMatrix::from_fn(fan_out, fan_in, |_, _| {
                    rng.random_range(-bound..bound)
                }),
                bias: vec![0.0; fan_out],
            }
        })
        .collect();
    Ok(MlpModel {
        layers,
        attribution_layer: widths.len() - 3,
        output_constraint: OutputConstraint::None,
        batch_norm: Vec::new(),
    })
}

impl MlpModel {
    pub fn n_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::fan_out)
    }

    /// `d_H`.
    pub fn attribution_width(&self) -> usize {
        self.layers[self.attribution_layer].fan_out()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(DenseLayer::fan_out));
        w
    }

    pub fn with_attribution_layer(mut self, hidden_index: usize) -> Result<Self> {
        if hidden_index >= self.n_hidden() {
            return Err(Error::Config(format!(
                "attribution layer {hidden_index} is not one of {} hidden layers",
                self.n_hidden()
            )));
        }
        self.attribution_layer = hidden_index;
        Ok(self)
    }

    /// Constrains the output weights to the simplex (`Σα = 1`, no bias).
    pub fn with_simplex_head(mut self) -> Result<Self> {
        if self.output_width() != 1 {
            return Err(Error::Config(
                "a simplex output head needs a single output".into(),
            ));
        }
        let out = self.layers.last_mut().expect("output layer");
        out.weights = DenseMatrix::zeros(1, out.fan_in());
        out.bias = vec![0.0];
        self.output_constraint = OutputConstraint::Simplex;
        Ok(self)
    }

    pub fn with_batch_norm(mut self) -> Self {
        self.batch_norm = self.layers[..self.n_hidden()]
            .iter()
            .map(|l| BatchNorm::new(l.fan_out()))
            .collect();
        self
    }

    /// Simplex weights `α`, when the head is constrained.
    pub fn simplex_alpha(&self) -> Option<Vec<f64>> {
        (self.output_constraint == OutputConstraint::Simplex)
            .then(|| simplex_weights(self.layers.last().expect("output layer").weights.row(0)))
    }

    fn effective_output(&self) -> DenseLayer {
        let out = self.layers.last().expect("output layer");
        match self.output_constraint {
            OutputConstraint::None => out.clone(),
            OutputConstraint::Simplex => DenseLayer {
                weights: DenseMatrix::from_vec(
                    1,
                    out.fan_in(),
                    simplex_weights(out.weights.row(0)),
                )
                .expect("row shape"),
                bias: vec![0.0],
            },
        }
    }

    /// Checks chained shapes and the attribution / batch-norm settings.
    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(Error::Config(
                "model needs at least one hidden layer".into(),
            ));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.bias.len() != layer.fan_out() {
                return Err(Error::Shape(format!("layer {l}: bias length mismatch")));
            }
            if l > 0 && layer.fan_in() != self.layers[l - 1].fan_out() {
                return Err(Error::Shape(format!(
                    "layer {l} expects {} inputs, previous layer has {} outputs",
                    layer.fan_in(),
                    self.layers[l - 1].fan_out()
                )));
            }
        }
        if self.attribution_layer >= self.n_hidden() {
            return Err(Error::Config(
                "attribution layer is not a hidden layer".into(),
            ));
        }
        if !self.batch_norm.is_empty() {
            if self.batch_norm.len() != self.n_hidden() {
                return Err(Error::Shape(
                    "one batch norm per hidden layer expected".into(),
                ));
            }
            for (l, bn) in self.batch_norm.iter().enumerate() {
                if bn.width() != self.layers[l].fan_out() {
                    return Err(Error::Shape(format!("batch norm {l} width mismatch")));
                }
            }
        }
        if self.output_constraint == OutputConstraint::Simplex && self.output_width() != 1 {
            return Err(Error::Config("simplex head needs one output".into()));
        }
        Ok(())
    }

    /// Inference forward pass (no dropout, batch norm on running stats).
    pub fn forward(&self, x: &DenseMatrix) -> Result<(DenseMatrix, ForwardTrace)> {
        self.run_forward(x, None)
    }

    /// Training forward pass: dropout after every hidden layer and batch
    /// norm on batch statistics.
    pub fn forward_train(
        &self,
        x: &DenseMatrix,
        mode: TrainMode<'_>,
    ) -> Result<(DenseMatrix, ForwardTrace)> {
        self.run_forward(x, Some(mode))
    }

    fn run_forward(
        &self,
        x: &DenseMatrix,
        mut train: Option<TrainMode<'_>>,
    ) -> Result<(DenseMatrix, ForwardTrace)> {
        if x.cols() != self.input_width() {
            return Err(Error::Shape(format!(
                "model expects {} input features, batch has {}",
                self.input_width(),
                x.cols()
            )));
        }
        let n_hidden = self.n_hidden();
        let mut trace = ForwardTrace {
            input: x.clone(),
            pre_activations: Vec::with_capacity(self.layers.len()),
            relu_inputs: Vec::with_capacity(n_hidden),
            batch_norm: Vec::new(),
            relu_masks: Vec::with_capacity(n_hidden),
            dropout: Vec::with_capacity(n_hidden),
            gains: Vec::with_capacity(n_hidden),
            activations: Vec::with_capacity(self.layers.len()),
        };

        let mut current = x.clone();
        for l in 0..n_hidden {
            let layer = &self.layers[l];
            let mut z = current.matmul_t(&layer.weights)?;
            z.add_row_vector(&layer.bias)?;

            let (relu_in, bn_scale) = if let Some(bn) = self.batch_norm.get(l) {
                let (out, cache) = match train {
                    Some(_) => batchnorm_forward_train(bn, &z)?,
                    None => batchnorm_forward_eval(bn, &z)?,
                };
                let scale: Vec<f64> = bn
                    .gamma
                    .iter()
                    .zip(&cache.inv_std)
                    .map(|(g, s)| g * s)
                    .collect();
                trace.batch_norm.push(cache);
                (out, Some(scale))
            } else {
                (z.clone(), None)
            };

            let mask = relu_in.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let mut act = relu_in.map(|v| v.max(0.0));
            let drop = match train.as_mut() {
                Some(mode) if mode.dropout_p > 0.0 => {
                    let m = dropout_mask(act.rows(), act.cols(), mode.dropout_p, mode.rng)?;
                    for (a, d) in act.as_mut_slice().iter_mut().zip(m.as_slice()) {
                        *a *= d;
                    }
                    Some(m)
                }
                _ => None,
            };

            let mut gain = mask.clone();
            if let Some(d) = &drop {
                for (g, v) in gain.as_mut_slice().iter_mut().zip(d.as_slice()) {
                    *g *= v;
                }
            }
            if let Some(scale) = &bn_scale {
                for i in 0..gain.rows() {
                    for (g, s) in gain.row_mut(i).iter_mut().zip(scale) {
                        *g *= s;
                    }
                }
            }

            trace.pre_activations.push(z);
            trace.relu_inputs.push(relu_in);
            trace.relu_masks.push(mask);
            trace.dropout.push(drop);
            trace.gains.push(gain);
            trace.activations.push(act.clone());
            current = act;
        }

        let out_layer = self.effective_output();
        let mut pred = current.matmul_t(&out_layer.weights)?;
        pred.add_row_vector(&out_layer.bias)?;
        trace.pre_activations.push(pred.clone());
        trace.activations.push(pred.clone());
        Ok((pred, trace))
    }

    /// Reverse-mode gradients of a scalar loss given `∂loss/∂prediction`.
    pub fn backward(&self, trace: &ForwardTrace, dpred: &DenseMatrix) -> Result<ParamGrads> {
        self.check_trace(trace)?;
        let mut grads = ParamGrads::zeros_like(self);
        let n_layers = self.layers.len();
        let out_layer = self.effective_output();

        let mut delta = dpred.clone();
        for l in (0..n_layers).rev() {
            let prev = if l == 0 {
                &trace.input
            } else {
                &trace.activations[l - 1]
            };
            let dw = delta.t_matmul(prev)?;
            let db = delta.column_sums();
            let weights = if l == n_layers - 1 {
                &out_layer.weights
            } else {
                &self.layers[l].weights
            };

            if l == n_layers - 1 && self.output_constraint == OutputConstraint::Simplex {
                // dφ = α ⊙ (dα − Σ_k α_k dα_k)
                let alpha = out_layer.weights.row(0);
                let dalpha = dw.row(0);
                let inner: f64 = alpha.iter().zip(dalpha).map(|(a, d)| a * d).sum();
                for (k, g) in grads.weights[l].row_mut(0).iter_mut().enumerate() {
                    *g = alpha[k] * (dalpha[k] - inner);
                }
            } else {
                grads.weights[l] = dw;
                grads.biases[l] = db;
            }

            if l == 0 {
                break;
            }
            // back into hidden layer l-1
            let h = l - 1;
            let mut da = delta.matmul(weights)?;
            if let Some(d) = &trace.dropout[h] {
                for (g, m) in da.as_mut_slice().iter_mut().zip(d.as_slice()) {
                    *g *= m;
                }
            }
            for (g, m) in da
                .as_mut_slice()
                .iter_mut()
                .zip(trace.relu_masks[h].as_slice())
            {
                *g *= m;
            }
            delta = if let Some(bn) = self.batch_norm.get(h) {
                let (dz, dgamma, dbeta) = batchnorm_backward(bn, &trace.batch_norm[h], &da);
                grads.bn_gamma[h] = dgamma;
                grads.bn_beta[h] = dbeta;
                dz
            } else {
                da
            };
        }
        Ok(grads)
    }

    pub(crate) fn check_trace(&self, trace: &ForwardTrace) -> Result<()> {
        let n_hidden = self.n_hidden();
        if trace.activations.len() != self.layers.len()
            || trace.gains.len() != n_hidden
            || trace.input.cols() != self.input_width()
        {
            return Err(Error::Trace(
                "trace layer count does not match model".into(),
            ));
        }
        for l in 0..n_hidden {
            if trace.activations[l].cols() != self.layers[l].fan_out() {
                return Err(Error::Trace(format!("hidden layer {l} width mismatch")));
            }
        }
        if trace.batch_norm.len() != self.batch_norm.len() {
            return Err(Error::Trace("batch norm caches do not match model".into()));
        }
        Ok(())
    }

    /// Folds training-mode batch statistics into the running averages.
    pub fn update_running_stats(&mut self, trace: &ForwardTrace) {
        for (bn, cache) in self.batch_norm.iter_mut().zip(&trace.batch_norm) {
            if cache.batch_stats {
                bn.update_running(cache);
            }
        }
    }

    /// Trainable parameters in canonical order: every layer's weights then
    /// bias, then every batch norm's scale then shift.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.layers {
            out.push(layer.weights.as_slice());
            out.push(&layer.bias);
        }
        for bn in &self.batch_norm {
            out.push(&bn.gamma);
            out.push(&bn.beta);
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            out.push(layer.weights.as_mut_slice());
            out.push(&mut layer.bias);
        }
        for bn in &mut self.batch_norm {
            out.push(&mut bn.gamma);
            out.push(&mut bn.beta);
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }
}

/// Mean task loss on a batch and reverse-mode gradients, using the
/// inference forward pass.
pub fn loss_and_grads(
    model: &MlpModel,
    x: &DenseMatrix,
    y: &[f64],
    task: Task,
) -> Result<(f64, ParamGrads)> {
    if x.rows() == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let targets = TargetBatch::from_labels(y, task, model.output_width())?;
    let (pred, trace) = model.forward(x)?;
    let (loss, dpred) = task_loss(&pred, &targets)?;
    let mut grads = model.backward(&trace, &dpred)?;
    freeze_simplex_bias(model, &mut grads);
    Ok((loss, grads))
}

pub fn freeze_simplex_bias(model: &MlpModel, grads: &mut ParamGrads) {
    if model.output_constraint == OutputConstraint::Simplex {
        for g in grads.biases.last_mut().expect("output layer") {
            *g = 0.0;
        }
    }
}
