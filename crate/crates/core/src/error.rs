use thiserror::Error;

/// Errors produced by the structured-matrix library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DebutError {
    #[error("shape error: {0}")]
    Shape(#[from] ShapeError),

    #[error("values length {actual} does not match structural nonzero count {expected}")]
    Length { expected: usize, actual: usize },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("adjacency error at junction {junction}: q = {q} of the factor on the left does not match p = {p} of the factor on the right")]
    Adjacency { junction: usize, q: usize, p: usize },

    #[error("chain is not densifying at junction {junction}: t = {t}, expected {expected}")]
    Densification {
        junction: usize,
        t: usize,
        expected: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("factor index {index} out of range for a chain of {len} factors")]
    Index { index: usize, len: usize },

    #[error("singular least-squares system ({unknowns} unknowns)")]
    SingularSystem { unknowns: usize },

    #[error("relative error undefined: target norm is zero but approximation is not")]
    ZeroTarget,

    #[error("no chain found for {rows_out}x{cols_in} within {max_factors} factors")]
    NoChainFound {
        rows_out: usize,
        cols_in: usize,
        max_factors: usize,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DebutError {
    fn from(e: std::io::Error) -> Self {
        DebutError::Io(e.to_string())
    }
}

/// Structural violations of a single factor shape.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShapeError {
    #[error("all of p, q, r, s, t must be positive (got ({p},{q},{r},{s},{t}))")]
    NonPositive {
        p: usize,
        q: usize,
        r: usize,
        s: usize,
        t: usize,
    },
    #[error("divisibility: p = {p} must be a multiple of r*t = {rt} and q = {q} a multiple of s*t = {st}")]
    Divisibility { p: usize, q: usize, rt: usize, st: usize },
    #[error("block count: p/(r*t) = {p}/{rt} differs from q/(s*t) = {q}/{st}")]
    BlockCount { p: usize, q: usize, rt: usize, st: usize },
    #[error("non-integral convolution output: ({extent} - {kernel}) is not divisible by stride {stride}")]
    NonIntegralOutput {
        extent: usize,
        kernel: usize,
        stride: usize,
    },
    #[error("kernel size {kernel} exceeds padded input extent {extent}")]
    KernelTooLarge { extent: usize, kernel: usize },
}

pub type Result<T, E = DebutError> = std::result::Result<T, E>;
