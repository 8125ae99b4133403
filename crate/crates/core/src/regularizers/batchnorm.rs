//! Batch normalization applied after a hidden linear layer, before ReLU.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

/// What the backward pass needs from a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BnCache {
    pub x_hat: DenseMatrix,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    /// `true` when normalized with batch statistics (training mode).
    pub batch_stats: bool,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    /// `running ← momentum·running + (1 − momentum)·batch` (unbiased batch
    /// variance).
    pub fn update_running(&mut self, cache: &BnCache) {
        let n = cache.x_hat.rows() as f64;
        let correction = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        for k in 0..self.width() {
            self.running_mean[k] =
                self.momentum * self.running_mean[k] + (1.0 - self.momentum) * cache.batch_mean[k];
            self.running_var[k] = self.momentum * self.running_var[k]
                + (1.0 - self.momentum) * cache.batch_var[k] * correction;
        }
    }
}

fn affine(bn: &BatchNorm, x_hat: &DenseMatrix) -> DenseMatrix {
    let mut out = x_hat.clone();
    for i in 0..out.rows() {
        for (k, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = bn.gamma[k] * *v + bn.beta[k];
        }
    }
    out
}

/// Training-mode forward with batch statistics.
pub fn batchnorm_forward_train(bn: &BatchNorm, z: &DenseMatrix) -> Result<(DenseMatrix, BnCache)> {
    let n = z.rows();
    if n < 2 {
        return Err(Error::DegenerateData(
            "batch normalization needs at least two rows in training mode".into(),
        ));
    }
    if z.cols() != bn.width() {
        return Err(Error::Shape(format!(
            "batch norm of width {} applied to {} columns",
            bn.width(),
            z.cols()
        )));
    }
    let nf = n as f64;
    let mean: Vec<f64> = z.column_sums().iter().map(|s| s / nf).collect();
    let mut var = vec![0.0; z.cols()];
    for i in 0..n {
        for (k, v) in z.row(i).iter().enumerate() {
            var[k] += (v - mean[k]) * (v - mean[k]);
        }
    }
    for v in &mut var {
        *v /= nf;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect();
    let x_hat = DenseMatrix::from_fn(n, z.cols(), |i, k| (z.get(i, k) - mean[k]) * inv_std[k]);
    let out = affine(bn, &x_hat);
    Ok((
        out,
        BnCache {
            x_hat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
            batch_stats: true,
        },
    ))
}

/// Inference-mode forward with running statistics.
pub fn batchnorm_forward_eval(bn: &BatchNorm, z: &DenseMatrix) -> Result<(DenseMatrix, BnCache)> {
    if z.cols() != bn.width() {
        return Err(Error::Shape(format!(
            "batch norm of width {} applied to {} columns",
            bn.width(),
            z.cols()
        )));
    }
    let inv_std: Vec<f64> = bn
        .running_var
        .iter()
        .map(|v| 1.0 / (v + bn.eps).sqrt())
        .collect();
    let x_hat = DenseMatrix::from_fn(z.rows(), z.cols(), |i, k| {
        (z.get(i, k) - bn.running_mean[k]) * inv_std[k]
    });
    let out = affine(bn, &x_hat);
    Ok((
        out,
        BnCache {
            x_hat,
            inv_std,
            batch_mean: bn.running_mean.clone(),
            batch_var: bn.running_var.clone(),
            batch_stats: false,
        },
    ))
}

/// Returns `(dz, dgamma, dbeta)`.
pub fn batchnorm_backward(
    bn: &BatchNorm,
    cache: &BnCache,
    dout: &DenseMatrix,
) -> (DenseMatrix, Vec<f64>, Vec<f64>) {
    let (n, w) = dout.shape();
    let mut dgamma = vec![0.0; w];
    let mut dbeta = vec![0.0; w];
    for i in 0..n {
        for k in 0..w {
            let g = dout.get(i, k);
            dgamma[k] += g * cache.x_hat.get(i, k);
            dbeta[k] += g;
        }
    }
    let dz = if cache.batch_stats {
        // dz = γ·inv_std/n · (n·dy − Σdy − x̂·Σ(dy·x̂))
        let nf = n as f64;
        DenseMatrix::from_fn(n, w, |i, k| {
            bn.gamma[k] * cache.inv_std[k] / nf
                * (nf * dout.get(i, k) - dbeta[k] - cache.x_hat.get(i, k) * dgamma[k])
        })
    } else {
        DenseMatrix::from_fn(n, w, |i, k| dout.get(i, k) * bn.gamma[k] * cache.inv_std[k])
    };
    (dz, dgamma, dbeta)
}
