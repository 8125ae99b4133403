use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;

use super::MlpModel;

/// Parameter gradients with the model's shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
    pub bn_gamma: Vec<Vec<f64>>,
    pub bn_beta: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model
                .layers
                .iter()
                .map(|l| DenseMatrix::zeros(l.fan_out(), l.fan_in()))
                .collect(),
            biases: model
                .layers
                .iter()
                .map(|l| vec![0.0; l.fan_out()])
                .collect(),
            bn_gamma: model
                .batch_norm
                .iter()
                .map(|b| vec![0.0; b.width()])
                .collect(),
            bn_beta: model
                .batch_norm
                .iter()
                .map(|b| vec![0.0; b.width()])
                .collect(),
        }
    }

    /// Same order as [`MlpModel::param_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice());
            out.push(b);
        }
        for (g, b) in self.bn_gamma.iter().zip(&self.bn_beta) {
            out.push(g);
            out.push(b);
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(b);
        }
        for (g, b) in self.bn_gamma.iter_mut().zip(self.bn_beta.iter_mut()) {
            out.push(g);
            out.push(b);
        }
        out
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        let theirs = other.slices();
        let mut mine = self.slices_mut();
        if mine.len() != theirs.len() || mine.iter().zip(&theirs).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::Shape("gradient structures differ".into()));
        }
        for (a, b) in mine.iter_mut().zip(theirs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            for v in s {
                *v *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Checks that the shapes mirror `model`.
    pub fn matches(&self, model: &MlpModel) -> bool {
        let a = self.slices();
        let b = model.param_slices();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
    }
}
