use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("invalid preparation: {0}")]
    InvalidPreparation(String),

    /// A stability or resolution precondition of the solver is violated; the
    /// run is refused before any compute.
    #[error("refusing to run: {0}")]
    Precondition(String),

    /// Too much of the transmitted energy arrives at the end of the time
    /// window; raised after the run.
    #[error(
        "refusing to run: {late_percent:.2}% of the transmitted energy arrives in the last 5% \
         of the {window_us} µs window; lengthen the window"
    )]
    WindowTooShort { late_percent: f64, window_us: f64 },

    #[error("numerical failure at slab {slab}, step {step}: {what}")]
    NumericalFailure {
        slab: usize,
        step: usize,
        what: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid reference: {0}")]
    InvalidReference(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
