use crate::model::{MlpModel, ParamGrads};

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `l1·Σ|w| + l2·Σw²` over the weights and biases of every dense layer.
pub fn weight_penalty(model: &MlpModel, l1_lambda: f64, l2_lambda: f64) -> (f64, ParamGrads) {
    let mut grads = ParamGrads::zeros_like(model);
    if l1_lambda == 0.0 && l2_lambda == 0.0 {
        return (0.0, grads);
    }
    let mut value = 0.0;
    let mut visit = |params: &[f64], out: &mut [f64]| {
        for (w, g) in params.iter().zip(out.iter_mut()) {
            value += l1_lambda * w.abs() + l2_lambda * w * w;
            *g = l1_lambda * sign(*w) + 2.0 * l2_lambda * w;
        }
    };
    for (l, layer) in model.layers.iter().enumerate() {
        visit(layer.weights.as_slice(), grads.weights[l].as_mut_slice());
        visit(&layer.bias, &mut grads.biases[l]);
    }
    (value, grads)
}
