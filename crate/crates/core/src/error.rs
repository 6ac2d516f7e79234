use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    Shape {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("label id {id} out of vocabulary of size {size}")]
    OutOfVocabulary { id: usize, size: usize },

    /// The target cannot be produced by any path of `frames` frames.
    #[error("infeasible target: {required} frames required, {frames} available")]
    Infeasible { frames: usize, required: usize },

    #[error("instance too large for exhaustive enumeration: {paths} paths (limit {limit})")]
    TooLarge { paths: u128, limit: u128 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed emission matrix: {0}")]
    Emission(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("checkpoint checksum mismatch: header {expected:#018x}, payload {found:#018x}")]
    Checksum { expected: u64, found: u64 },

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("every training pair is infeasible under the CTC length constraint")]
    NoFeasiblePairs,

    #[error("training diverged: non-finite loss at step {step}")]
    Divergence { step: u64 },

    #[error("line {line}: {message}")]
    Data { line: usize, message: String },

    #[error("invalid UTF-8 input")]
    Encoding(#[from] std::str::Utf8Error),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
