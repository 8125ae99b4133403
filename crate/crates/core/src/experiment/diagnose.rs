use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Registry, Task};
use crate::diagnostics::{attribution_stats, decompose_ensemble, DecompositionRecord};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, save_checkpoint, MlpModel};
use crate::trainer::{evaluate, fit_with_monitor, history_csv, FitResult, TrainConfig};

use super::{
    prepare_fold, split_seed, train_seed, write_atomic, write_manifest, ExperimentConfig, FoldData,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagnoseMode {
    /// Test-set specialization and orthogonalization per epoch.
    #[default]
    Attr,
    /// Ensemble error decomposition under a sum-to-one head per epoch.
    Decomp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSettings {
    pub mode: DiagnoseMode,
    /// Evaluate a saved model once instead of training.
    pub checkpoint: Option<PathBuf>,
    /// Evaluation cadence in epochs.
    pub every: usize,
}

impl Default for DiagnoseSettings {
    fn default() -> Self {
        Self {
            mode: DiagnoseMode::Attr,
            checkpoint: None,
            every: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttrPoint {
    pub epoch: usize,
    pub l_spec: f64,
    pub l_orth: Option<f64>,
}

fn fold_config(cfg: &ExperimentConfig, code: &str, label: &str) -> TrainConfig {
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    TrainConfig {
        seed: train_seed(cfg.master_seed, code, label, seed),
        ..cfg.train.clone()
    }
}

fn load_fold(cfg: &ExperimentConfig, registry: &Registry) -> Result<(String, FoldData)> {
    cfg.validate(registry)?;
    let code = cfg.single_dataset()?.to_string();
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let fold = prepare_fold(
        registry,
        &code,
        split_seed(cfg.master_seed, &code, seed),
        cfg.fold,
    )?;
    Ok((code, fold))
}

/// Trains on the fold's training rows and records test-set attribution
/// statistics every `every` epochs. Test rows are only read for the curve.
pub fn attribution_curve(
    fold: &FoldData,
    cfg: &TrainConfig,
    every: usize,
) -> Result<(FitResult, Vec<AttrPoint>)> {
    let every = every.max(1);
    let x_test = fold.dataset.subset(&fold.split.test_indices).x;
    let mut points = Vec::new();
    let result = fit_with_monitor(
        &fold.dataset,
        &fold.train,
        &fold.val,
        cfg,
        &mut |r, model| {
            if r.epoch % every == 0 {
                let s = attribution_stats(model, &x_test)?;
                points.push(AttrPoint {
                    epoch: r.epoch,
                    l_spec: s.l_spec,
                    l_orth: s.l_orth,
                });
            }
            Ok(())
        },
    )?;
    Ok((result, points))
}

/// Like [`attribution_curve`] with a sum-to-one output head, recording the
/// test-set error decomposition.
pub fn decomposition_curve(
    fold: &FoldData,
    cfg: &TrainConfig,
    every: usize,
) -> Result<(FitResult, Vec<(usize, DecompositionRecord)>)> {
    if fold.dataset.task != Task::Regression {
        return Err(Error::UnsupportedTask(
            "ensemble decomposition is defined for regression only".into(),
        ));
    }
    let cfg = TrainConfig {
        simplex_head: true,
        ..cfg.clone()
    };
    let every = every.max(1);
    let test = fold.dataset.subset(&fold.split.test_indices);
    let mut points = Vec::new();
    let result = fit_with_monitor(
        &fold.dataset,
        &fold.train,
        &fold.val,
        &cfg,
        &mut |r, model| {
            if r.epoch % every == 0 {
                points.push((
                    r.epoch,
                    decompose_ensemble(model, test.task, &test.x, &test.y)?,
                ));
            }
            Ok(())
        },
    )?;
    Ok((result, points))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn attribution_curve_csv(points: &[AttrPoint]) -> String {
    let mut out = String::from("epoch,L_spec,L_orth\n");
    for p in points {
        out.push_str(&format!("{},{:?},{}\n", p.epoch, p.l_spec, opt(p.l_orth)));
    }
    out
}

pub fn decomposition_curve_csv(points: &[(usize, DecompositionRecord)]) -> String {
    let mut out = String::from("epoch,err,err_bar,div,identity_residual\n");
    for (epoch, r) in points {
        out.push_str(&format!(
            "{epoch},{:?},{:?},{:?},{:?}\n",
            r.err, r.err_bar, r.div, r.identity_residual
        ));
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub result: FitResult,
    pub test_metric: f64,
}

/// Fits one fold and writes `history.csv`, `checkpoint.json`,
/// `metrics.json` and the manifest.
pub fn run_train(cfg: &ExperimentConfig, registry: &Registry, out: &Path) -> Result<TrainOutcome> {
    let (code, fold) = load_fold(cfg, registry)?;
    write_manifest(out, &cfg.manifest("train")?)?;
    let tcfg = fold_config(cfg, &code, "train");
    let result = fit_with_monitor(&fold.dataset, &fold.train, &fold.val, &tcfg, &mut |_, _| {
        Ok(())
    })?;
    let test_metric = evaluate(
        &result.model,
        &fold.dataset.subset(&fold.split.test_indices),
    )?;
    write_atomic(
        &out.join("history.csv"),
        history_csv(&result.history).as_bytes(),
    )?;
    save_checkpoint(&out.join("checkpoint.json"), &result.model)?;
    let metrics = serde_json::json!({
        "dataset": code,
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "test_metric": test_metric,
    });
    write_atomic(
        &out.join("metrics.json"),
        serde_json::to_string_pretty(&metrics)?.as_bytes(),
    )?;
    Ok(TrainOutcome {
        result,
        test_metric,
    })
}

fn check_dims(model: &MlpModel, fold: &FoldData) -> Result<()> {
    let (d_x, d_out) = (fold.dataset.n_features(), fold.dataset.output_width());
    if model.input_width() != d_x || model.output_width() != d_out {
        return Err(Error::Checkpoint(format!(
            "checkpoint maps {} inputs to {} outputs, dataset needs {d_x} to {d_out}",
            model.input_width(),
            model.output_width()
        )));
    }
    Ok(())
}

/// Writes `attribution.csv` or `decomposition.csv`. With a checkpoint the
/// saved model is evaluated once and reported as epoch 0.
pub fn run_diagnose(cfg: &ExperimentConfig, registry: &Registry, out: &Path) -> Result<PathBuf> {
    let (code, fold) = load_fold(cfg, registry)?;
    let settings = &cfg.diagnose;
    if settings.mode == DiagnoseMode::Decomp && fold.dataset.task != Task::Regression {
        return Err(Error::UnsupportedTask(format!(
            "decomposition needs a regression dataset, {code} is classification"
        )));
    }
    write_manifest(out, &cfg.manifest("diagnose")?)?;
    let tcfg = fold_config(cfg, &code, "diagnose");
    let test = fold.dataset.subset(&fold.split.test_indices);
    let (name, csv) = match (settings.mode, &settings.checkpoint) {
        (DiagnoseMode::Attr, Some(path)) => {
            let model = load_checkpoint(path)?;
            check_dims(&model, &fold)?;
            let s = attribution_stats(&model, &test.x)?;
            let p = AttrPoint {
                epoch: 0,
                l_spec: s.l_spec,
                l_orth: s.l_orth,
            };
            ("attribution.csv", attribution_curve_csv(&[p]))
        }
        (DiagnoseMode::Decomp, Some(path)) => {
            let model = load_checkpoint(path)?;
            check_dims(&model, &fold)?;
            let r = decompose_ensemble(&model, test.task, &test.x, &test.y)?;
            ("decomposition.csv", decomposition_curve_csv(&[(0, r)]))
        }
        (DiagnoseMode::Attr, None) => {
            let (fit, points) = attribution_curve(&fold, &tcfg, settings.every)?;
            save_checkpoint(&out.join("checkpoint.json"), &fit.model)?;
            ("attribution.csv", attribution_curve_csv(&points))
        }
        (DiagnoseMode::Decomp, None) => {
            let (fit, points) = decomposition_curve(&fold, &tcfg, settings.every)?;
            save_checkpoint(&out.join("checkpoint.json"), &fit.model)?;
            ("decomposition.csv", decomposition_curve_csv(&points))
        }
    };
    let path = out.join(name);
    write_atomic(&path, csv.as_bytes())?;
    Ok(path)
}
