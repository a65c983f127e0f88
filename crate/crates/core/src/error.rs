use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument outside the domain: {0}")]
    Domain(String),
    #[error("principal branch cut: base {base} lies on (-inf, 0]")]
    BranchCut { base: Complex64 },
    #[error("pole: {0}")]
    Pole(String),
    #[error("point {x} lies within tolerance of a partition boundary")]
    Boundary { x: f64 },
    #[error("unsupported mode: {0}")]
    Mode(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error("consistency check failed: {0}")]
    Consistency(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in JSON error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::BranchCut { .. } => "branch_cut",
            Error::Pole(_) => "pole",
            Error::Boundary { .. } => "boundary",
            Error::Mode(_) => "mode",
            Error::Construction(_) => "construction",
            Error::Evaluation(_) => "evaluation",
            Error::Consistency(_) => "consistency",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
