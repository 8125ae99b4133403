use std::path::PathBuf;

/// Errors raised anywhere in the training laboratory.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("preprocessing error: {0}")]
    Preprocess(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("iteration error: {0}")]
    Iteration(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("label error: class index {index} out of range for {n_classes} classes")]
    Label { index: usize, n_classes: usize },

    #[error("trace error: {0}")]
    Trace(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("unsupported task: {0}")]
    UnsupportedTask(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("incomplete grid: missing {}", .0.join(", "))]
    IncompleteGrid(Vec<String>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
