use thiserror::Error;

/// Errors produced anywhere in the coding and recovery pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid matrix dimensions {rows}x{cols}")]
    InvalidDims { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("i/o error")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown configuration key `{key}` at line {line}")]
    UnknownKey { key: String, line: usize },
    #[error("symbol {symbol} out of range for alphabet of size {size}")]
    SymbolOutOfRange { symbol: u32, size: u32 },
    #[error("truncated stream")]
    TruncatedStream,
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate interval [{lower}, {upper})")]
    DegenerateInterval { lower: f64, upper: f64 },
    #[error("block length {0} is too short for the syndrome ladder (need at least 64)")]
    BlockTooShort(usize),
    #[error("decoded prefix is inconsistent with plane {plane}")]
    InconsistentPrefix { plane: usize },
    #[error("operator has zero norm")]
    ZeroMatrix,
    #[error("malformed stream: {0}")]
    MalformedStream(String),
}

pub type Result<T> = std::result::Result<T, Error>;
