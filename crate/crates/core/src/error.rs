use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration or an invalid pairing of inputs.
    #[error("configuration error: {0}")]
    Config(String),

    /// A matrix that should be positive definite was not.
    #[error("ill-conditioned matrix: Cholesky pivot {index} is {pivot:e}")]
    IllConditioned { index: usize, pivot: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("point {point} has {reps} replications; at least 2 are required")]
    InsufficientReplications { point: usize, reps: usize },

    #[error("regressor matrix is rank deficient: {0}")]
    Regressor(String),

    #[error("model fit failed: {0}")]
    Fit(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A log-log fit whose slope is not negative cannot be extrapolated to a target.
    #[error("no convergence: fitted log-log slope {slope} is not negative")]
    NoConvergence { slope: f64 },
}

impl Error {
    /// Whether this error should be reported as a configuration problem
    /// (as opposed to a numeric failure).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Unsupported(_))
    }
}
