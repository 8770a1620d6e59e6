use thiserror::Error;

/// Errors raised anywhere in the multiscale pipeline.
///
/// The variants map onto the CLI exit codes: configuration problems exit
/// with 2, numerical failures with 3 and invariant violations with 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("numerical error: {message} (residual {residual:.3e})")]
    Numerical { message: String, residual: f64 },

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("not implemented: {0}")]
    NotImplemented(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    /// A convergence fit saw a zero error: the quantity is reproduced exactly.
    #[error("degenerate rate fit: {0}")]
    DegenerateFit(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn scenario(msg: impl Into<String>) -> Self {
        Error::Scenario(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub fn numerical(msg: impl Into<String>, residual: f64) -> Self {
        Error::Numerical {
            message: msg.into(),
            residual,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::NotImplemented(_) | Error::Io(_) => 2,
            Error::Numerical { .. } | Error::Assembly(_) | Error::DegenerateFit(_) => 3,
            Error::Scenario(_) | Error::Invariant(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
