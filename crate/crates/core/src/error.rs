use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (‖m + mᵀ‖_F = {asymmetry:e})")]
    NotSkew { asymmetry: f64 },

    #[error("invalid rotation: orthogonality error {orthogonality:e}, determinant {determinant}")]
    InvalidRotation { orthogonality: f64, determinant: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("body index {index} out of range for {bodies} bodies")]
    IndexOutOfRange { index: usize, bodies: usize },

    #[error("quadrature did not reach tolerance {tolerance:e} (error estimate {estimate:e})")]
    QuadratureFailure { tolerance: f64, estimate: f64 },

    #[error("symmetric positive definite solve failed: {0}")]
    SolveFailure(String),

    #[error("Newton iteration diverged{}: residual {residual:e} after {iterations} iterations", step_suffix(.step))]
    NewtonDivergence {
        step: Option<usize>,
        iterations: usize,
        residual: f64,
    },

    #[error("invalid settings: {0}")]
    InvalidSettings(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("cadence mismatch: {0}")]
    CadenceMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn step_suffix(step: &Option<usize>) -> String {
    match step {
        Some(k) => format!(" at step {k}"),
        None => String::new(),
    }
}

impl Error {
    /// Stable class name, printed by the CLI on failure.
    pub fn class_name(&self) -> &'static str {
        match self {
            Error::NotSkew { .. } => "NotSkew",
            Error::InvalidRotation { .. } => "InvalidRotation",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::SolveFailure(_) => "SolveFailure",
            Error::NewtonDivergence { .. } => "NewtonDivergence",
            Error::InvalidSettings(_) => "InvalidSettings",
            Error::Parse(_) => "ParseError",
            Error::Validation(_) => "ValidationError",
            Error::CadenceMismatch(_) => "CadenceMismatch",
            Error::Io(_) => "IoError",
        }
    }

    pub(crate) fn with_step(self, k: usize) -> Self {
        match self {
            Error::NewtonDivergence {
                iterations,
                residual,
                ..
            } => Error::NewtonDivergence {
                step: Some(k),
                iterations,
                residual,
            },
            other => other,
        }
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
