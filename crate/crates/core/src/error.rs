use thiserror::Error;

/// Errors raised by the engine. Each variant maps onto one CLI exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FcltError {
    #[error("size limit exceeded: {what} (limit {limit})")]
    SizeLimit { what: String, limit: u64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate functional: {0}")]
    Degenerate(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("invalid covariance model: {0}")]
    ModelInvalid(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl FcltError {
    pub fn size_limit(what: impl Into<String>, limit: u64) -> Self {
        FcltError::SizeLimit { what: what.into(), limit }
    }

    /// Process exit code: 2 usage, 3 cap, 4 hypothesis, 5 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            FcltError::Contract(_) | FcltError::Config(_) => 2,
            FcltError::SizeLimit { .. } => 3,
            FcltError::Hypothesis(_) | FcltError::Degenerate(_) => 4,
            FcltError::ModelInvalid(_) | FcltError::Numeric(_) => 5,
        }
    }

    /// Short stable tag used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            FcltError::SizeLimit { .. } => "size_limit",
            FcltError::Contract(_) => "contract",
            FcltError::Degenerate(_) => "degenerate",
            FcltError::Hypothesis(_) => "hypothesis",
            FcltError::ModelInvalid(_) => "model_invalid",
            FcltError::Numeric(_) => "numeric",
            FcltError::Config(_) => "config",
        }
    }
}

pub type Result<T> = std::result::Result<T, FcltError>;
