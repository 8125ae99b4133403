//! Tabular ingestion, preprocessing, partitioning and mini-batching.

mod batch;
mod ingest;
mod preprocess;
mod registry;
mod split;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::numeric::DenseMatrix;

pub use batch::{minibatches, MiniBatch};
pub use ingest::{load_csv, load_csv_from_reader, RawTable};
pub use preprocess::{apply_stats, fit_stats, preprocess, StandardizationStats};
pub use registry::{DatasetEntry, Registry};
pub use split::{make_split, SplitPlan, N_FOLDS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Target,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub log_transform: bool,
    /// Ordered levels for categorical columns. Empty on input; filled from
    /// training rows by [`fit_stats`]. For a classification target this
    /// may be supplied up front to pin the class order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub category_levels: Vec<String>,
}

impl ColumnSchema {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric,
            log_transform: false,
            category_levels: Vec::new(),
        }
    }

    pub fn log_numeric(name: impl Into<String>) -> Self {
        Self {
            log_transform: true,
            ..Self::numeric(name)
        }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        Self {
            kind: ColumnKind::Categorical,
            ..Self::numeric(name)
        }
    }

    pub fn target(name: impl Into<String>) -> Self {
        Self {
            kind: ColumnKind::Target,
            ..Self::numeric(name)
        }
    }
}

/// Level assigned to missing categorical cells.
pub const MISSING_LEVEL: &str = "__missing__";

/// Encoded dataset: every feature is numeric and finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix,
    /// Standardized target for regression, class index for classification.
    pub y: Vec<f64>,
    pub task: Task,
    pub n_classes: usize,
    pub schema: Vec<ColumnSchema>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    /// Output width a model needs for this task.
    pub fn output_width(&self) -> usize {
        match self.task {
            Task::Regression => 1,
            Task::Classification => self.n_classes,
        }
    }

    /// A new dataset holding only `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            task: self.task,
            n_classes: self.n_classes,
            schema: self.schema.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}
