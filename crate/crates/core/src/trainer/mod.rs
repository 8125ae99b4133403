//! Training loop, Adam, early stopping, cross-validated model selection and
//! hyperparameter grids.

mod adam;
mod cv;
mod fit;
mod grid;

pub use adam::{adam_step, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use cv::{cross_validate, cross_validate_with, final_seed, fold_seed, CvData, CvOutcome};
pub use fit::{
    build_model, evaluate, fit, fit_fixed_epochs, fit_with_monitor, history_csv, write_history_csv,
    EpochMonitor, EpochRecord, FitResult, TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_LEARNING_RATE,
    DEFAULT_MAX_EPOCHS, DEFAULT_PATIENCE,
};
pub use grid::{
    grid_label, method_grid, method_grid_named, Base, GridLabel, Method, DROPOUT_RATES,
    LEARNING_RATES, NOISE_SDS, ORTH_LAMBDAS, SPEC_LAMBDAS, WEIGHT_LAMBDAS,
};
