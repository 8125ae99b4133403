//! JSON experiment configs, run manifests and the commands built on them.
//!
//! Seeds fan out from a single master seed: the split of a dataset for seed
//! index `s` depends only on `(master, dataset, s)`, and the training
//! streams of a method only on `(master, dataset, method, s)`. Adding a
//! method or a dataset therefore leaves every other cell's randomness alone.

mod benchmark;
mod diagnose;
mod report;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{apply_stats, fit_stats, make_split, Dataset, Registry, SplitPlan};
use crate::error::{Error, Result};
use crate::numeric::SeededRng;
use crate::trainer::{Method, TrainConfig};

pub use benchmark::{
    method_table_csv, read_results, results_csv, run_benchmark, run_cell, summarize, summary_csv,
    write_results, BenchmarkOutcome, ResultRow, SummaryRow, RESULTS_HEADER,
};
pub use diagnose::{
    attribution_curve, attribution_curve_csv, decomposition_curve, decomposition_curve_csv,
    run_diagnose, run_train, AttrPoint, DiagnoseMode, DiagnoseSettings, TrainOutcome,
};
pub use report::{build_report, run_report, Report, WilcoxonRow};

pub const MANIFEST_FORMAT: &str = "tangos-lab-manifest/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset registry; relative paths resolve against the config file.
    pub registry: PathBuf,
    pub datasets: Vec<String>,
    pub methods: Vec<Method>,
    /// Seed indices; each picks an independent split and training stream.
    pub seeds: Vec<u64>,
    pub master_seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Base training settings; grids only replace the searched fields.
    pub train: TrainConfig,
    /// Cross-validation fold used for its train/validation rows by `train`
    /// and `diagnose`.
    pub fold: usize,
    pub diagnose: DiagnoseSettings,
    /// Results CSVs read by `report`.
    pub results: Vec<PathBuf>,
    /// Method every other method is compared against in `report`.
    pub reference_method: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            registry: PathBuf::from("registry.json"),
            datasets: Vec::new(),
            methods: Vec::new(),
            seeds: vec![0],
            master_seed: 0,
            out_dir: None,
            train: TrainConfig::default(),
            fold: 0,
            diagnose: DiagnoseSettings::default(),
            results: Vec::new(),
            reference_method: "TANGOS".into(),
        }
    }
}

/// Record written next to every run's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub manifest_format: String,
    pub command: String,
    pub version: String,
    pub master_seed: u64,
    /// SHA-256 of the compact JSON encoding of `config`.
    pub config_sha256: String,
    pub config: ExperimentConfig,
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("{what}: at '{path}': {}", e.inner()))
    })
}

impl ExperimentConfig {
    /// Reads a config, or the config embedded in a manifest, and resolves
    /// relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = if value.get("manifest_format").is_some() {
            let m: Manifest = parse_json(&text, &path.display().to_string())?;
            if m.manifest_format != MANIFEST_FORMAT {
                return Err(Error::Config(format!(
                    "unsupported manifest format '{}'",
                    m.manifest_format
                )));
            }
            if m.config_sha256 != config_hash(&m.config)? {
                return Err(Error::Config(format!(
                    "{}: config hash does not match its contents",
                    path.display()
                )));
            }
            m.config
        } else {
            parse_json(&text, &path.display().to_string())?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.registry);
        self.results.iter_mut().for_each(fix);
        if let Some(c) = self.diagnose.checkpoint.as_mut() {
            fix(c);
        }
        if let Some(o) = self.out_dir.as_mut() {
            fix(o);
        }
    }

    pub fn load_registry(&self) -> Result<Registry> {
        Registry::load(&self.registry)
    }

    /// Checks dataset codes against `registry` and the training settings.
    pub fn validate(&self, registry: &Registry) -> Result<()> {
        for code in &self.datasets {
            registry.entry(code)?;
        }
        if self.fold >= crate::data::N_FOLDS {
            return Err(Error::Config(format!("fold {} out of range", self.fold)));
        }
        self.train
            .validate()
            .map_err(|e| Error::Config(format!("train: {e}")))
    }

    pub fn manifest(&self, command: &str) -> Result<Manifest> {
        Ok(Manifest {
            manifest_format: MANIFEST_FORMAT.into(),
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            master_seed: self.master_seed,
            config_sha256: config_hash(self)?,
            config: self.clone(),
        })
    }

    /// The single dataset used by `train` and `diagnose`.
    pub fn single_dataset(&self) -> Result<&str> {
        match self.datasets.as_slice() {
            [d] => Ok(d),
            other => Err(Error::Config(format!(
                "datasets: expected exactly one dataset code, got {}",
                other.len()
            ))),
        }
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let bytes = serde_json::to_vec(cfg)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

pub fn split_seed(master: u64, dataset: &str, seed: u64) -> u64 {
    SeededRng::new(master)
        .split(dataset)
        .split("split")
        .split_index(seed)
        .key()
}

pub fn train_seed(master: u64, dataset: &str, method: &str, seed: u64) -> u64 {
    SeededRng::new(master)
        .split(dataset)
        .split(&format!("method/{method}"))
        .split_index(seed)
        .key()
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    write_atomic(&path, serde_json::to_string_pretty(manifest)?.as_bytes())?;
    Ok(path)
}

/// A dataset encoded with statistics from one fold's training rows.
pub struct FoldData {
    pub dataset: Dataset,
    pub split: SplitPlan,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

pub fn prepare_fold(
    registry: &Registry,
    code: &str,
    split_seed: u64,
    fold: usize,
) -> Result<FoldData> {
    let (raw, entry) = registry.load_raw(code)?;
    let split = make_split(raw.len(), split_seed)?;
    let (train, val) = split.fold(fold)?;
    let stats = fit_stats(&raw, &entry.columns, &train, entry.task)?;
    let dataset = apply_stats(&raw, &stats)?;
    Ok(FoldData {
        dataset,
        split,
        train,
        val,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_independent_of_other_cells() {
        let a = train_seed(7, "BH", "TANGOS", 0);
        assert_eq!(a, train_seed(7, "BH", "TANGOS", 0));
        assert_ne!(a, train_seed(7, "BH", "L2", 0));
        assert_ne!(a, train_seed(7, "BH", "TANGOS", 1));
        assert_ne!(a, train_seed(8, "BH", "TANGOS", 0));
        assert_ne!(split_seed(7, "BH", 0), split_seed(7, "BC", 0));
    }

    #[test]
    fn config_errors_name_the_field() {
        let err =
            parse_json::<ExperimentConfig>(r#"{"train": {"learning_rat": 1}}"#, "cfg").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("train"), "{msg}");
        let err = parse_json::<ExperimentConfig>(r#"{"methods": ["ridge"]}"#, "cfg").unwrap_err();
        assert!(err.to_string().contains("methods"));
    }

    #[test]
    fn manifest_round_trips_and_detects_edits() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            registry: dir.path().join("registry.json"),
            datasets: vec!["BH".into()],
            master_seed: 3,
            ..ExperimentConfig::default()
        };
        let m = cfg.manifest("benchmark").unwrap();
        let path = write_manifest(dir.path(), &m).unwrap();
        assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);

        let mut edited = m.clone();
        edited.config.master_seed = 4;
        std::fs::write(&path, serde_json::to_string(&edited).unwrap()).unwrap();
        assert!(ExperimentConfig::load(&path).is_err());
    }
}
