use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation (e.g. `t <= 0`).
    #[error("domain error: {0}")]
    Domain(String),

    /// The lattice series cannot be truncated within the requested tolerance.
    #[error("truncation error: tail bound {bound:e} exceeds tolerance {tol:e} at L = {terms}")]
    Truncation { terms: usize, bound: f64, tol: f64 },

    #[error("numerical consistency error: {0}")]
    NumericalConsistency(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// A configuration constraint is violated; the message names it.
    #[error("config error: {0}")]
    Config(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("unsupported order: {0}")]
    UnsupportedOrder(usize),

    #[error("basis resolution error: relative residual {residual:e} exceeds {tol:e}")]
    BasisResolution { residual: f64, tol: f64 },

    #[error("kernel consistency error: eigenvalue {0:e} below tolerance")]
    KernelConsistency(f64),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
