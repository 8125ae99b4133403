use crate::error::{Error, Result};
use crate::model::{MlpModel, ParamGrads};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments over the model's flattened parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(model: &MlpModel, learning_rate: f64) -> Self {
        let n = model.n_params();
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            learning_rate,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified when a gradient
/// entry is non-finite.
pub fn adam_step(
    state: &mut OptimizerState,
    model: &mut MlpModel,
    grads: &ParamGrads,
) -> Result<()> {
    if !grads.matches(model) || state.m.len() != model.n_params() {
        return Err(Error::Shape(
            "gradients or optimizer state do not match the model".into(),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::Training(format!(
            "non-finite gradient at optimizer step {}",
            state.step + 1
        )));
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - state.beta1.powf(t);
    let c2 = 1.0 - state.beta2.powf(t);
    let mut k = 0;
    for (p, g) in model.param_slices_mut().into_iter().zip(grads.slices()) {
        for (w, &gi) in p.iter_mut().zip(g) {
            let m = state.beta1 * state.m[k] + (1.0 - state.beta1) * gi;
            let v = state.beta2 * state.v[k] + (1.0 - state.beta2) * gi * gi;
            state.m[k] = m;
            state.v[k] = v;
            *w -= state.learning_rate * (m / c1) / ((v / c2).sqrt() + state.eps);
            k += 1;
        }
    }
    Ok(())
}
