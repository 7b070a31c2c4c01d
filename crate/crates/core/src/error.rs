use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A closed form divided by a success probability that is exactly zero.
    #[error("degenerate result: {0}")]
    Degenerate(String),

    #[error("lattice size {d} not allowed: {reason}")]
    LatticeSize { d: usize, reason: &'static str },

    #[error("flip vector has length {got}, lattice has {expected} qubits")]
    SizeMismatch { expected: usize, got: usize },

    #[error("residual error has a non-empty syndrome ({0} defects)")]
    ResidualSyndrome(usize),

    #[error("matching infeasible: {0}")]
    Infeasible(String),

    #[error("incompatible fusion: {0}")]
    IncompatibleStages(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
