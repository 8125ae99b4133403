//! Training laboratory for ReLU MLPs on tabular data with latent-attribution
//! regularization (specialization and orthogonalization of per-neuron input
//! gradients), baseline regularizers, cross-validated sweeps and analysis
//! diagnostics.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod model;
pub mod numeric;
pub mod par;
pub mod regularizers;
pub mod trainer;

pub use error::{Error, Result};
