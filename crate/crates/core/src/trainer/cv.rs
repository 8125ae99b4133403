use crate::data::{
    apply_stats, fit_stats, ColumnSchema, Dataset, RawTable, SplitPlan, Task, N_FOLDS,
};
use crate::error::{Error, Result};
use crate::numeric::SeededRng;
use crate::par::{map_indexed, Execution};

use super::fit::{evaluate, fit, fit_fixed_epochs, FitResult, TrainConfig};

/// Where cross-validation gets encoded data for a given set of fit rows.
#[derive(Clone, Copy, Debug)]
pub enum CvData<'a> {
    /// Preprocessing statistics are refit on each fold's training rows, so
    /// neither validation nor test rows inform any statistic.
    Raw {
        raw: &'a RawTable,
        schema: &'a [ColumnSchema],
        task: Task,
    },
    /// Already encoded; the same encoding is used for every fold.
    Encoded(&'a Dataset),
}

impl CvData<'_> {
    fn n_rows(&self) -> usize {
        match self {
            CvData::Raw { raw, .. } => raw.len(),
            CvData::Encoded(d) => d.len(),
        }
    }

    /// `(rows_a, rows_b)` encoded with statistics from `fit_rows`.
    fn encode(&self, fit_rows: &[usize], a: &[usize], b: &[usize]) -> Result<(Dataset, Dataset)> {
        match self {
            CvData::Raw { raw, schema, task } => {
                let stats = fit_stats(raw, schema, fit_rows, *task)?;
                let full = apply_stats(raw, &stats)?;
                Ok((full.subset(a), full.subset(b)))
            }
            CvData::Encoded(d) => Ok((d.subset(a), d.subset(b))),
        }
    }
}

/// Seed of fold `k`'s fit under a grid point whose seed is `seed`.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    SeededRng::new(seed)
        .split("fold")
        .split_index(fold as u64)
        .key()
}

pub fn final_seed(seed: u64) -> u64 {
    SeededRng::new(seed).split("final").key()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvOutcome {
    pub selected_index: usize,
    pub selected: TrainConfig,
    /// Per grid point, validation loss of each fold (`+inf` for a failed fit).
    pub fold_losses: Vec<Vec<f64>>,
    pub mean_val_losses: Vec<f64>,
    /// Epochs used for the final fit on all cross-validation rows.
    pub final_epochs: usize,
    pub final_fit: FitResult,
    /// MSE (regression) or NLL (classification) on the held-out rows.
    pub test_metric: f64,
}

struct FoldFit {
    val_loss: f64,
    best_epoch: usize,
}

pub fn cross_validate(
    data: CvData<'_>,
    split: &SplitPlan,
    grid: &[TrainConfig],
) -> Result<CvOutcome> {
    cross_validate_with(data, split, grid, Execution::default())
}

/// Grid points × folds run under `exec`; the winner is the lowest mean
/// validation loss with ties going to the earlier grid point. The winner is
/// then refit on every cross-validation row for the rounded mean of its
/// folds' best epochs and scored once on the test rows.
pub fn cross_validate_with(
    data: CvData<'_>,
    split: &SplitPlan,
    grid: &[TrainConfig],
    exec: Execution,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::Config("hyperparameter grid is empty".into()));
    }
    for cfg in grid {
        cfg.validate()?;
    }
    split.validate(data.n_rows())?;
    if split.cv_folds.len() != N_FOLDS {
        return Err(Error::Split(format!(
            "expected {N_FOLDS} folds, plan has {}",
            split.cv_folds.len()
        )));
    }

    // Each fold's training and validation rows, encoded once. Test rows are
    // never part of these tables.
    let folds = map_indexed(exec, N_FOLDS, |k| -> Result<(Dataset, usize)> {
        let (train, val) = split.fold(k)?;
        let (mut t, v) = data.encode(&train, &train, &val)?;
        let n_train = t.len();
        t.x = stack(&t, &v)?;
        t.y.extend_from_slice(&v.y);
        Ok((t, n_train))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let cells = map_indexed(exec, grid.len() * N_FOLDS, |c| {
        let (g, k) = (c / N_FOLDS, c % N_FOLDS);
        let (ds, n_train) = &folds[k];
        let train: Vec<usize> = (0..*n_train).collect();
        let val: Vec<usize> = (*n_train..ds.len()).collect();
        let cfg = TrainConfig {
            seed: fold_seed(grid[g].seed, k),
            ..grid[g].clone()
        };
        match fit(ds, &train, &val, &cfg) {
            Ok(r) => FoldFit {
                val_loss: if r.best_val_loss.is_finite() {
                    r.best_val_loss
                } else {
                    f64::INFINITY
                },
                best_epoch: r.best_epoch,
            },
            Err(_) => FoldFit {
                val_loss: f64::INFINITY,
                best_epoch: 0,
            },
        }
    });

    let fold_losses: Vec<Vec<f64>> = cells
        .chunks(N_FOLDS)
        .map(|c| c.iter().map(|f| f.val_loss).collect())
        .collect();
    let mean_val_losses: Vec<f64> = fold_losses
        .iter()
        .map(|l| l.iter().sum::<f64>() / N_FOLDS as f64)
        .collect();
    let mut selected_index = 0;
    for (g, &m) in mean_val_losses.iter().enumerate() {
        if m < mean_val_losses[selected_index] {
            selected_index = g;
        }
    }
    if !mean_val_losses[selected_index].is_finite() {
        return Err(Error::Training(
            "every grid point failed in cross-validation".into(),
        ));
    }
    let chosen = &cells[selected_index * N_FOLDS..(selected_index + 1) * N_FOLDS];
    let mean_epoch = chosen.iter().map(|f| f.best_epoch as f64).sum::<f64>() / N_FOLDS as f64;
    let final_epochs = (mean_epoch.round() as usize).max(1);

    let cv_rows = split.cv_indices();
    let (train_ds, test_ds) = data.encode(&cv_rows, &cv_rows, &split.test_indices)?;
    let selected = grid[selected_index].clone();
    let final_cfg = TrainConfig {
        seed: final_seed(selected.seed),
        ..selected.clone()
    };
    let all: Vec<usize> = (0..train_ds.len()).collect();
    let final_fit = fit_fixed_epochs(&train_ds, &all, final_epochs, &final_cfg)?;
    let test_metric = evaluate(&final_fit.model, &test_ds)?;
    Ok(CvOutcome {
        selected_index,
        selected,
        fold_losses,
        mean_val_losses,
        final_epochs,
        final_fit,
        test_metric,
    })
}

fn stack(a: &Dataset, b: &Dataset) -> Result<crate::numeric::DenseMatrix> {
    let mut data = a.x.as_slice().to_vec();
    data.extend_from_slice(b.x.as_slice());
    crate::numeric::DenseMatrix::from_vec(a.len() + b.len(), a.n_features(), data)
}
