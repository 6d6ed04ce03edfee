use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the coding layer (matrices, codes, layout).
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("indices must be strictly increasing")]
    UnorderedIndices,
    #[error("matrix entry must be 0 or 1, got {0}")]
    InvalidEntry(u8),
    #[error("singular matrix: rank {rank} < {cols} columns")]
    Singular { rank: usize, cols: usize },
    #[error("invalid code spec: {0}")]
    InvalidSpec(String),
    #[error("invalid probability {0}: must lie strictly between 0 and 1")]
    InvalidProbability(f64),
    #[error("data blocks have unequal lengths")]
    UnequalBlockLengths,
    #[error("no data to encode")]
    EmptyData,
    #[error("insufficient blocks: {present} present, {required} required")]
    InsufficientBlocks { present: usize, required: usize },
    #[error("decode failure: surviving generator rows have rank {rank} < {required}")]
    DecodeFailure { rank: usize, required: usize },
    #[error("codeword is incomplete: {missing} blocks missing")]
    IncompleteCodeword { missing: usize },
    #[error("malformed matrix encoding: {0}")]
    MalformedEncoding(String),
}
