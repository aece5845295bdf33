use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("incompatible grids: {left_w}x{left_h} vs {right_w}x{right_h}")]
    ShapeMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("prompt ({x}, {y}) lies outside the {width}x{height} grid")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("degenerate mask: {0}")]
    DegenerateMask(&'static str),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("background prompts (c = 0) are not supported by this segmenter")]
    BackgroundPrompt,

    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("cache does not match this operation: {0}")]
    StaleCache(&'static str),

    #[error("malformed PGM header in {path}: {reason}")]
    PgmHeader { path: PathBuf, reason: String },

    #[error("unsupported PGM maxval {maxval} in {path}")]
    PgmMaxval { path: PathBuf, maxval: u32 },

    #[error("truncated PGM payload in {path}: expected {expected} bytes, found {found}")]
    PgmTruncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("bad weight file magic (expected \"SPOT\")")]
    WeightsMagic,

    #[error("unsupported weight file version {0}")]
    WeightsVersion(u32),

    #[error("weight file layer plan does not match this network: {0}")]
    WeightsPlan(String),

    #[error("truncated weight file")]
    WeightsTruncated,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
