use thiserror::Error;

/// Errors raised by the analytic pipeline and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix exponential overflow (norm {norm:.3e})")]
    ExpOverflow { norm: f64 },

    #[error("singular or ill-conditioned matrix (condition estimate {condition:.3e}) in {context}")]
    Singular { context: String, condition: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no convergence in {context} after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error("inversion check failed: {0}")]
    Inversion(String),

    #[error("limit extrapolation failed: {0}")]
    Extrapolation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("simulation exceeded the event budget of {0} events")]
    EventBudget(u64),

    #[error("unknown estimand `{name}`; available: {available}")]
    UnknownEstimand { name: String, available: String },

    #[error("model file: {0}")]
    Parse(String),
}

impl Error {
    /// Numerical failures (as opposed to bad inputs).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ExpOverflow { .. }
                | Error::Singular { .. }
                | Error::NoConvergence { .. }
                | Error::Inversion(_)
                | Error::Extrapolation(_)
                | Error::EventBudget(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
