use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("validation failed: {message} (nodes: {nodes:?})")]
    Validation { message: String, nodes: Vec<usize> },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("quadrature did not reach relative tolerance {target:.1e} (estimate {achieved:.3e})")]
    Quadrature { target: f64, achieved: f64 },

    #[error("eigen solver failure: {0}")]
    Eigen(String),

    #[error("at parameter {parameter}: {source}")]
    AtParameter { parameter: f64, source: Box<Error> },
}

impl Error {
    /// Attaches the sweep parameter at which the failure occurred.
    pub fn at(self, parameter: f64) -> Self {
        Error::AtParameter { parameter, source: Box::new(self) }
    }

    /// The innermost error, looking through parameter annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtParameter { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
