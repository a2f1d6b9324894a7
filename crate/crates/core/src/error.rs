use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("degenerate cell voltage {0} V")]
    DegenerateVoltage(f64),

    #[error("{path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error("{path}: missing column for role `{role}` (expected header `{header}`)")]
    MissingColumn {
        path: PathBuf,
        role: &'static str,
        header: String,
    },

    #[error("feature error at second {index}: {reason}")]
    Feature { index: usize, reason: String },

    #[error("sequence of length {len} is shorter than window length {window}")]
    EmptyDataset { len: usize, window: usize },

    #[error("split {spec} of {n} windows leaves the {part} split empty")]
    EmptySplit {
        spec: String,
        n: usize,
        part: &'static str,
    },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("partition mismatch: {0}")]
    PartitionMismatch(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {key}: {reason}")]
    Config { key: String, reason: String },

    #[error("report: {0}")]
    Report(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by bad input (configuration, parameters, data
    /// contracts) rather than failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParam { .. }
                | Error::Config { .. }
                | Error::EmptySplit { .. }
                | Error::EmptyDataset { .. }
                | Error::MissingColumn { .. }
                | Error::PartitionMismatch(_)
                | Error::Report(_)
        )
    }
}
