use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (empty input, bad dimensions, NaN).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("closed-form dynamics support only 2 joints, model has {0}")]
    UnsupportedModel(usize),

    /// A sampled link point sits on the obstacle center, so the distance gradient is undefined.
    #[error("degenerate geometry: link point {index} is {distance:e} m from the obstacle center")]
    DegenerateGeometry { index: usize, distance: f64 },

    #[error("numerical singularity: {0}")]
    NumericalSingularity(String),

    #[error("safety breach at t = {t}: barrier value {h:e} below tolerance {tolerance:e}")]
    SafetyBreach { t: f64, h: f64, tolerance: f64 },

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::ContractViolation(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
