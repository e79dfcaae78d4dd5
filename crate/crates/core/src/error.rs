use thiserror::Error;

/// Errors raised by the lattice, model and spectral layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("ball of radius 0 has no inner boundary")]
    EmptyBoundary,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field undefined at site {site:?} (needed for target {target:?})")]
    FieldDomain { site: Vec<i64>, target: Vec<i64> },

    #[error("energy {energy} resonates with eigenvalue {eigenvalue}")]
    Resonance { energy: f64, eigenvalue: f64 },

    #[error("eigensolver did not converge for a {0}x{0} matrix")]
    Convergence(usize),

    #[error("interval half-width {eps} below validity threshold {threshold}")]
    BelowThreshold { eps: f64, threshold: f64 },

    #[error("degenerate amplitude distribution (zero variance)")]
    Degenerate,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Resonance { .. } | Error::Convergence(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
