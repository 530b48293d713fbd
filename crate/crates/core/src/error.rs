use thiserror::Error;

pub type Result<T> = std::result::Result<T, SolverError>;

/// Every failure the solver stack can report.
#[derive(Debug, Clone, Error)]
pub enum SolverError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The inner solver could not certify the requested accuracy.
    #[error("prox failure: gap {gap:.3e} > epsilon {epsilon:.3e} after {cuts} cuts")]
    ProxFailure {
        best: Vec<f64>,
        gap: f64,
        epsilon: f64,
        cuts: usize,
    },

    #[error("internal solver error: {0}")]
    InternalSolver(String),

    /// `g_a . d >= 0` or `d == 0`.
    #[error("invalid direction: slope {slope:.3e}")]
    InvalidDirection { slope: f64 },

    #[error(
        "line search failed after {backtracks} backtracks (best trial tau {best_tau:.3e}, value {best_value:.6e})"
    )]
    LineSearchFailure {
        best_tau: f64,
        best_value: f64,
        backtracks: u32,
    },

    #[error("insufficient trace: {usable} usable records, need {required}")]
    InsufficientTrace { usable: usize, required: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl SolverError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SolverError::InvalidArgument(msg.into())
    }
}
