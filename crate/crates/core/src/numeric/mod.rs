//! Dense matrices and seed-splittable random streams.

mod matrix;
mod rng;

pub(crate) use matrix::dot;
pub use matrix::DenseMatrix;
pub use rng::{sample_beta, sample_gaussian, SeededRng};
