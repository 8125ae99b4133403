//! Dataset registry: a JSON object mapping dataset codes to CSV files and
//! column schemas.
//!
//! ```json
//! {
//!   "BH": {
//!     "csv": "bh_style.csv",
//!     "task": "regression",
//!     "max_rows": 1000,
//!     "columns": [
//!       { "name": "crim", "kind": "numeric", "log_transform": true },
//!       { "name": "rad", "kind": "categorical" },
//!       { "name": "medv", "kind": "target" }
//!     ]
//!   }
//! }
//! ```
//!
//! Relative CSV paths resolve against the registry file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_csv, ColumnSchema, RawTable, Task};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub csv: PathBuf,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rows: Option<usize>,
    pub columns: Vec<ColumnSchema>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct Registry {
    base_dir: PathBuf,
    entries: BTreeMap<String, DatasetEntry>,
}

impl Registry {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: BTreeMap<String, DatasetEntry> = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("registry {}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { base_dir, entries })
    }

    pub fn from_entries(base_dir: PathBuf, entries: BTreeMap<String, DatasetEntry>) -> Self {
        Self { base_dir, entries }
    }

    pub fn entries(&self) -> &BTreeMap<String, DatasetEntry> {
        &self.entries
    }

    pub fn entry(&self, code: &str) -> Result<&DatasetEntry> {
        self.entries.get(code).ok_or_else(|| {
            Error::Config(format!(
                "unknown dataset code '{code}' (registry has: {})",
                self.entries.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn csv_path(&self, code: &str) -> Result<PathBuf> {
        let entry = self.entry(code)?;
        Ok(if entry.csv.is_absolute() {
            entry.csv.clone()
        } else {
            self.base_dir.join(&entry.csv)
        })
    }

    pub fn load_raw(&self, code: &str) -> Result<(RawTable, &DatasetEntry)> {
        let entry = self.entry(code)?;
        let raw = load_csv(&self.csv_path(code)?, &entry.columns, entry.max_rows)?;
        Ok((raw, entry))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.entries)?)
    }
}
