use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("gimbal lock: pitch {theta} rad is within 1e-6 of +/-pi/2")]
    GimbalLock { theta: f64 },

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("thruster {index}: {what}")]
    ThrusterLimit { index: usize, what: String },

    #[error("requested wrench exceeds actuator limits; feasible scale factor {scale}")]
    Saturation { scale: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("singular KKT system in {context}")]
    SingularKkt { context: String },

    #[error("{loop_name} loop: {source}")]
    Loop {
        loop_name: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("step {step}: {source}")]
    Run {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::InvalidParams(_) | Error::Io(_) => true,
            Error::Loop { source, .. } | Error::Run { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
