use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("pole in hypergeometric series: denominator factor vanishes at term {term}")]
    Pole { term: usize },

    #[error("parity violation: {0}")]
    Parity(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("state cannot reach the bridge endpoint: {0}")]
    UnreachableState(String),

    #[error("bridge set is empty for d={d}, n*={n_star}, x*={x_star}")]
    EmptyBridge { d: usize, n_star: i64, x_star: i64 },

    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("samples were drawn from different bridge specs")]
    SpecMismatch,

    #[error("negative probability {value:e} beyond clamp tolerance {tol:e}")]
    NegativeProbability { value: f64, tol: f64 },

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
