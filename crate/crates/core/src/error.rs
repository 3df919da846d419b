use std::path::PathBuf;

/// Every failure the library reports.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("validation: {0}")]
    Validation(String),
    #[error("topology: {0}")]
    Topology(String),
    #[error("label catalog: {0}")]
    Catalog(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("solver did not converge: {msg} (residual {residual:.3e})")]
    Solver { msg: String, residual: f64 },
    #[error("structure rule `{0}` matched no elements")]
    Rule(String),
    #[error("path: {0}")]
    Path(String),
    #[error("anchor: {0}")]
    Anchor(String),
    #[error("coordinate domain: {0}")]
    Domain(String),
    #[error("electrode placement: {0}")]
    Placement(String),
    #[error("input: {0}")]
    Input(String),
    #[error("measurement: {0}")]
    Measurement(String),
    #[error("selection: {0}")]
    Selection(String),
    #[error("tuning: {0}")]
    Tuning(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code: 2 for bad input or configuration, 3 for numerical failure, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Solver { .. } | Error::Tuning(_) | Error::Measurement(_) => 3,
            Error::Io { .. } => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
