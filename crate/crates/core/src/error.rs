use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty sample set")]
    EmptySamples,
    #[error("{what} = {value} out of range [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: usize,
        lo: usize,
        hi: usize,
    },
    #[error("matrix is not orthonormal (deviation {0:.3e})")]
    NotOrthonormal(f64),
    #[error("domain is not centered at the origin (offset {0:.3e})")]
    NotCentered(f64),
    #[error("point lies outside the reduced domain")]
    OutsideDomain,
    #[error("linear program could not be solved: {0}")]
    LinearProgram(String),
    #[error("rejection sampler stalled: {accepted} accepted in {draws} draws")]
    SamplerStalled { draws: u64, accepted: u64 },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
