use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),
    #[error("series truncation needs degree {needed} but the table stops at {max}")]
    Truncation { needed: usize, max: usize },
    #[error("precision error: {0}")]
    Precision(String),
    #[error("non-finite integrand value at node {index}")]
    Evaluation { index: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("point not covered by the lattice: {0}")]
    Coverage(String),
    #[error("lattice construction failed: worst audit sample has min rho {worst_rho} at {sample:?}")]
    Construction { worst_rho: f64, sample: Vec<f64> },
    #[error("refused: contraction estimate {0} is not below 1")]
    NonContraction(f64),
    #[error("no convergence after {iterations} iterations (last residual {last})")]
    Convergence { iterations: usize, last: f64, history: Vec<f64> },
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
