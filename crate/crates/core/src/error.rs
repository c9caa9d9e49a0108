use std::fmt;

/// Errors produced by the reconstruction library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shapes, grids or parameters that violate an operation's precondition.
    InvalidInput(String),
    /// A state or objective value became non-finite.
    NumericalBlowup(String),
    /// An iterative solver hit its iteration cap.
    Convergence { what: String, residual: f64 },
    /// Malformed text input (spec files, sinogram headers, image headers).
    Parse { line: usize, msg: String },
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code used by the command line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Parse { .. } => 2,
            Error::NumericalBlowup(_) | Error::Convergence { .. } => 3,
            Error::Io(_) => 4,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::NumericalBlowup(msg) => write!(f, "numerical blowup: {msg}"),
            Error::Convergence { what, residual } => {
                write!(f, "{what} did not converge (residual {residual:.3e})")
            }
            Error::Parse { line, msg } => write!(f, "parse error at line {line}: {msg}"),
            Error::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::invalid(format!("{what} has a non-finite entry at index {i}"))),
        None => Ok(()),
    }
}
