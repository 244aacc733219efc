use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("cannot decode {}: {reason}", path.display())]
    Decode { path: PathBuf, reason: String },

    #[error("image has a zero dimension ({width}x{height})")]
    ZeroDimension { width: usize, height: usize },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("importance provider failed: {0}")]
    ProviderFailure(String),

    #[error("invalid energy provider configuration: {0}")]
    InvalidProvider(&'static str),

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("invalid seam: {0}")]
    InvalidSeam(String),

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("mesh fold-over: quad {quad} has signed area {area:.6}")]
    Foldover { quad: usize, area: f64 },

    #[error("solver did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("deformation field does not cover {0}")]
    Coverage(String),

    #[error("operation requires a {expected} field, found {found}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("frame {index} is {found:?}, expected {expected:?}")]
    FrameDimensionMismatch {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("malformed deformation file, line {line}: {reason}")]
    FieldFormat { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad
    /// input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Foldover { .. } | Error::NonConvergence { .. })
    }
}
