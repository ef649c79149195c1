use thiserror::Error;

/// Errors raised by the embedding toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or out-of-range input (shapes, dimensions, parameters).
    #[error("invalid input: {0}")]
    Input(String),

    /// A Cholesky pivot was not strictly positive.
    #[error("matrix is not positive definite: pivot {index} = {value:e}")]
    Singular { index: usize, value: f64 },

    /// An iterative method ran out of iterations.
    #[error("no convergence after {iterations} iterations (last estimate {estimate:e})")]
    Convergence { iterations: usize, estimate: f64 },

    /// The proximal gradient solver produced a non-finite objective.
    #[error("solver diverged at iteration {iteration}: non-finite objective")]
    Divergence { iteration: usize },

    /// Internal numerical inconsistency (e.g. a PSD quantity came out negative).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Operation requested on a configuration it does not support.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// Value iteration blew past the geometric-series bound.
    #[error(
        "value iteration unstable at sweep {sweep}: |V| = {magnitude:e} exceeds bound {bound:e}; try a larger lambda"
    )]
    Instability { sweep: usize, magnitude: f64, bound: f64 },

    /// An error annotated with the context it happened in (method, gamma, ...).
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Wrap with a context label.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with all context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by bad inputs rather than numerical failure.
    pub fn is_input(&self) -> bool {
        matches!(self.root(), Error::Input(_) | Error::Unsupported(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
