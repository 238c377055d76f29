use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge ({src}, {dst}) references a node outside 0..{num_nodes}")]
    EdgeOutOfRange {
        src: usize,
        dst: usize,
        num_nodes: usize,
    },

    #[error("metric is undefined: {0}")]
    UndefinedMetric(String),

    #[error("{op}: dimension mismatch: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value encountered: {0}")]
    NumericInstability(String),

    #[error("solver diverged at step {step}")]
    Divergence { step: usize },

    #[error("training diverged at epoch {epoch}: {detail}")]
    TrainingDivergence { epoch: usize, detail: String },

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible synthetic graph: {0}")]
    Infeasible(String),

    #[error("{}:{line}: {detail}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable code printed as the prefix of CLI error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EdgeOutOfRange { .. } => "E_GRAPH",
            Error::UndefinedMetric(_) => "E_METRIC",
            Error::Dimension { .. } => "E_DIM",
            Error::Contract(_) => "E_CONTRACT",
            Error::NumericInstability(_) => "E_NUMERIC",
            Error::Divergence { .. } => "E_DIVERGED",
            Error::TrainingDivergence { .. } => "E_DIVERGED",
            Error::NonFiniteGradient(_) => "E_NUMERIC",
            Error::Config(_) => "E_CONFIG",
            Error::Infeasible(_) => "E_INFEASIBLE",
            Error::Parse { .. } => "E_PARSE",
            Error::Io { .. } => "E_IO",
            Error::Csv(_) => "E_PARSE",
            Error::Json(_) => "E_PARSE",
        }
    }
}
