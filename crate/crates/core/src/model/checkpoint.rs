//! Model checkpoints as JSON.
//!
//! ```json
//! {
//!   "format": "tangos-mlp/1",
//!   "widths": [13, 14, 14, 1],
//!   "model": { "layers": [{ "weights": { "rows": 14, "cols": 13, "data": [...] },
//!                            "bias": [...] }, ...],
//!              "attribution_layer": 1, "output_constraint": "none",
//!              "batch_norm": [] }
//! }
//! ```
//!
//! Floats are written with shortest round-trip formatting, so a save/load
//! cycle reproduces every parameter bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::MlpModel;

pub const CHECKPOINT_FORMAT: &str = "tangos-mlp/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub widths: Vec<usize>,
    pub model: MlpModel,
}

impl Checkpoint {
    pub fn new(model: &MlpModel) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            widths: model.widths(),
            model: model.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unsupported format '{}', expected '{CHECKPOINT_FORMAT}'",
                ck.format
            )));
        }
        ck.model
            .validate()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.model.widths() != ck.widths {
            return Err(Error::Checkpoint(format!(
                "declared widths {:?} disagree with layers {:?}",
                ck.widths,
                ck.model.widths()
            )));
        }
        Ok(ck)
    }
}

pub fn save_checkpoint(path: &Path, model: &MlpModel) -> Result<()> {
    let text = Checkpoint::new(model).to_json()?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<MlpModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Checkpoint::from_json(&text)?.model)
}
