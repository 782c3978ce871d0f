use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("system generation failed after {attempts} attempts")]
    Generation { attempts: usize },

    #[error("process-noise covariance is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("model order {order} too small: need at least {required}")]
    Order { order: usize, required: usize },

    #[error("noise matrix V unavailable: implicit model error needs simulator data")]
    DiagnosticUnavailable,

    #[error("empirical input covariance is singular (sigma_min = {sigma_min:e})")]
    SingularCovariance { sigma_min: f64 },

    #[error("internal consistency: negative suboptimality gap {gap:e}")]
    NegativeGap { gap: f64 },

    #[error("invalid value for `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("non-finite statistic in {context}")]
    NonFiniteResult { context: String },

    #[error("cannot read config file {path}: {source}")]
    ConfigFile {
        path: String,
        source: std::io::Error,
    },

    #[error("cannot parse config{}: {message}", key.as_deref().map(|k| format!(" at `{k}`")).unwrap_or_default())]
    ConfigParse { key: Option<String>, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
