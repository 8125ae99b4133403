use crate::error::{Error, Result};

use super::{MlpModel, ParamGrads};

fn param_mut(model: &mut MlpModel, mut k: usize) -> &mut f64 {
    for s in model.param_slices_mut() {
        if k < s.len() {
            return &mut s[k];
        }
        k -= s.len();
    }
    panic!("parameter index out of range")
}

/// Central differences `(f(θ+εe) − f(θ−εe)) / 2ε` for every parameter.
pub fn fd_oracle(model: &MlpModel, f: impl Fn(&MlpModel) -> f64, eps: f64) -> Result<ParamGrads> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Oracle(format!("step {eps} must be positive")));
    }
    let mut grads = ParamGrads::zeros_like(model);
    let mut flat = Vec::with_capacity(model.n_params());
    let mut probe = model.clone();
    for k in 0..model.n_params() {
        let original = *param_mut(&mut probe, k);
        *param_mut(&mut probe, k) = original + eps;
        let up = f(&probe);
        *param_mut(&mut probe, k) = original - eps;
        let down = f(&probe);
        *param_mut(&mut probe, k) = original;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Oracle(format!("non-finite value at parameter {k}")));
        }
        flat.push((up - down) / (2.0 * eps));
    }
    let mut offset = 0;
    for s in grads.slices_mut() {
        let n = s.len();
        s.copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    Ok(grads)
}
