use std::path::PathBuf;

/// Errors raised across the estimation pipeline.
///
/// Variants carry the module-level context (asset label, window index,
/// offending eigenvalue) so the CLI can report failures without guessing.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("eigendecomposition did not converge for a {dim}x{dim} matrix")]
    EigenNoConvergence { dim: usize },

    #[error("matrix is not positive definite: eigenvalue {eigenvalue:e} at or below {floor:e}")]
    NotPositiveDefinite { eigenvalue: f64, floor: f64 },

    #[error("inverse residual {residual:e} exceeds {tolerance:e}")]
    InverseResidual { residual: f64, tolerance: f64 },

    #[error("nodewise: asset {label} (index {index}) is perfectly explained, tau^2 = {tau_sq:e}")]
    DegenerateAsset {
        index: usize,
        label: String,
        tau_sq: f64,
    },

    #[error("nodewise: KKT audit failed for asset {index}: {detail}")]
    KktViolation { index: usize, detail: String },

    #[error("{method}: precision unavailable, minimum eigenvalue {min_eigenvalue:e}")]
    EstimatorNotPd {
        method: &'static str,
        min_eigenvalue: f64,
    },

    #[error("poet: threshold constant exceeded {max_zeta} without a well-conditioned residual covariance")]
    PoetConditioning { max_zeta: f64 },

    #[error("portfolio: {0}")]
    Portfolio(String),

    #[error("backtest window {window}: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
