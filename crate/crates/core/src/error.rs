use thiserror::Error;

/// Errors raised across the simulator, audits and harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated an argument contract (dimension mismatch, bad spec, empty grid).
    #[error("usage error: {0}")]
    Usage(String),

    /// The model produced an invalid coefficient (e.g. nonpositive damping).
    #[error("model error: {0}")]
    Model(String),

    /// A mathematical precondition of an operation does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// The requested theorem mode does not apply to the parameters.
    #[error("mode error: {0}")]
    Mode(String),

    /// A theorem's hypotheses are not met, so its prediction is unavailable.
    #[error("not applicable: {0}")]
    Applicability(String),

    /// Input data is unusable (nonpositive values in a log fit, too few samples).
    #[error("data error: {0}")]
    Data(String),

    /// A numerical routine failed to converge or a post-check tripped.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A closed form is evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Scenario configuration problem, naming the offending key.
    #[error("config error (key `{key}`): {message}")]
    Config { key: String, message: String },

    #[error("config parse error: {0}")]
    ConfigSyntax(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

pub(crate) fn config(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}
