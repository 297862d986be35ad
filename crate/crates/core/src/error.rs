use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("quantization level {level} does not fit in 16 bits")]
    LevelOverflow { level: i64 },

    #[error("malformed payload: {0}")]
    Payload(String),

    #[error("predictor invariant violated: residual norm {e_norm} exceeds gradient norm {g_norm}")]
    ContractionViolated { e_norm: f64, g_norm: f64 },

    #[error("agent {agent} and server disagree at iteration {t}")]
    Desync { agent: usize, t: usize },

    #[error("training diverged at iteration {t}: loss gap {gap:e} exceeds {limit:e}")]
    Diverged { t: usize, gap: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
