use thiserror::Error;

pub type Result<T, E = CgnsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CgnsError {
    #[error("non-finite coefficient at t = {t}")]
    NonFiniteCoefficient { t: f64 },

    #[error("observation noise Gramian is not positive definite at t = {t}")]
    SingularObservationGramian { t: f64 },

    #[error("{what} is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { what: &'static str, min_eig: f64 },

    #[error("non-finite or blown-up state at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("posterior covariance blew up at t = {t}")]
    CovarianceBlowup { t: f64 },

    #[error("filter covariance is singular at t = {t} (min eigenvalue {min_eig:e})")]
    FilterCovSingular { t: f64, min_eig: f64 },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("ensemble member {index}: {source}")]
    Member {
        index: usize,
        #[source]
        source: Box<CgnsError>,
    },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{path}: {message}")]
    Schema { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CgnsError {
    /// Process exit code for the command-line front end: 2 for configuration
    /// and input problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CgnsError::Config { .. }
            | CgnsError::Schema { .. }
            | CgnsError::Io { .. }
            | CgnsError::Json(_)
            | CgnsError::InvalidParams(_)
            | CgnsError::Dimension(_) => 2,
            CgnsError::Member { source, .. } => source.exit_code(),
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CgnsError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CgnsError::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
