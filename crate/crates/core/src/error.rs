use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("singular geometry for path {path}: {reason}")]
    SingularGeometry { path: usize, reason: String },

    /// The information matrix could not be inverted. Carries the eigenvalues
    /// of the equilibrated matrix so the caller can see which directions are
    /// unobservable.
    #[error("numerically singular information matrix (condition {condition:.3e})")]
    SingularFim {
        condition: f64,
        eigenvalues: Vec<f64>,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
