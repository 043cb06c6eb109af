use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distance law: {0}")]
    InvalidLaw(String),

    #[error("invalid jump law: {0}")]
    InvalidJumpLaw(String),

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),

    #[error("beyond realized horizon: {0}")]
    HorizonExceeded(String),

    #[error("too large for exact computation: {0}")]
    TooLarge(String),

    #[error("unsupported regime: {0}")]
    Unsupported(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
