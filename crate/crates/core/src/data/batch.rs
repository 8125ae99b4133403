use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, SeededRng};

#[derive(Clone, Debug, PartialEq)]
pub struct MiniBatch {
    pub indices: Vec<usize>,
    pub x: DenseMatrix,
    pub y: Vec<f64>,
}

/// One epoch: a shuffled pass over `indices`, chunked into batches of
/// `batch_size` (the last one may be short).
pub fn minibatches(
    dataset: &Dataset,
    indices: &[usize],
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<Vec<MiniBatch>> {
    if indices.is_empty() {
        return Err(Error::Iteration("no rows to batch".into()));
    }
    if batch_size == 0 {
        return Err(Error::Iteration("batch size must be at least 1".into()));
    }
    let mut order = indices.to_vec();
    order.shuffle(rng);
    Ok(order
        .chunks(batch_size)
        .map(|chunk| MiniBatch {
            indices: chunk.to_vec(),
            x: dataset.x.select_rows(chunk),
            y: chunk.iter().map(|&i| dataset.y[i]).collect(),
        })
        .collect())
}
