use thiserror::Error;

/// Errors raised by the numerical kernels, solvers and simulators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum JsqError {
    #[error("argument {value} outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("parameter order violated: {0}")]
    ParamOrder(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{method} failed to converge (residual {residual:e})")]
    Convergence { method: &'static str, residual: f64 },

    #[error("singular denominator {denominator:e} in {what}")]
    Singularity {
        what: &'static str,
        denominator: f64,
    },

    #[error("quadrature did not reach tolerance {tol:e} (estimated error {estimate:e})")]
    Quadrature { tol: f64, estimate: f64 },

    #[error("running cost has not vanished by t = {horizon}")]
    HorizonDetection { horizon: f64 },

    #[error("state space has {states} states, limit is {limit}")]
    StateSpaceTooLarge { states: usize, limit: usize },

    #[error("arrival target index exceeds truncation depth {depth}")]
    TruncationOverflow { depth: usize },

    #[error("need at least {required} samples, got {got}")]
    SampleSize { required: usize, got: usize },

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },
}

impl JsqError {
    /// Machine-readable code used in CLI error records.
    pub fn code(&self) -> &'static str {
        match self {
            JsqError::Domain { .. } => "DOMAIN",
            JsqError::ParamOrder(_) => "PARAM_ORDER",
            JsqError::InvalidParameter(_) => "INVALID_PARAMETER",
            JsqError::Convergence { .. } => "CONVERGENCE",
            JsqError::Singularity { .. } => "SINGULARITY",
            JsqError::Quadrature { .. } => "QUADRATURE",
            JsqError::HorizonDetection { .. } => "HORIZON",
            JsqError::StateSpaceTooLarge { .. } => "STATE_SPACE_TOO_LARGE",
            JsqError::TruncationOverflow { .. } => "TRUNCATION_OVERFLOW",
            JsqError::SampleSize { .. } => "SAMPLE_SIZE",
            JsqError::Unknown { .. } => "UNKNOWN_NAME",
        }
    }

    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            JsqError::ParamOrder(_)
                | JsqError::InvalidParameter(_)
                | JsqError::Unknown { .. }
                | JsqError::SampleSize { .. }
                | JsqError::Domain { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, JsqError>;
