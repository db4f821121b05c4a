use std::fmt;

/// Errors raised by mesh construction, assembly, solvers and the optimizer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("quadrature order {requested} is not available (supported orders are 1..={max})")]
    QuadratureOrder { requested: usize, max: usize },

    #[error("point {point} lies outside the open domain")]
    OutsideDomain { point: PointDisplay },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("linear solve failed: {0}")]
    Solver(#[from] SolveError),

    #[error("initial value projection: {0}")]
    InitialProjection(SolveError),

    #[error("time step {step}: {source}")]
    TimeStep { step: usize, source: SolveError },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// Whether the error stems from user input rather than a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Parse { .. } | Error::InvalidParameter { .. })
    }
}

/// Failure modes of the conjugate-gradient solver.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("non-finite value encountered at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("no convergence after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("operator and right-hand side have incompatible sizes ({matrix} vs {rhs})")]
    Size { matrix: usize, rhs: usize },
}

/// Coordinates wrapper so that error messages print points compactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PointDisplay(pub Vec<f64>);

impl fmt::Display for PointDisplay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

pub type Result<T> = std::result::Result<T, Error>;
