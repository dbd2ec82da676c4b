use thiserror::Error;

/// Errors produced by the decoding and training library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("shift out of range: {shift} at ({row}, {col}) with lifting factor {z}")]
    ShiftOutOfRange {
        row: usize,
        col: usize,
        shift: usize,
        z: usize,
    },

    #[error("duplicate cell ({row}, {col})")]
    DuplicateCell { row: usize, col: usize },

    #[error("inconsistent adjacency: {0}")]
    Inconsistent(String),

    #[error("check node {cn} has degree {degree}, at least 2 required")]
    DegreeTooSmall { cn: usize, degree: usize },

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("incompatible weight transfer: {0}")]
    Transfer(String),

    #[error("trial budget of {budget} frames exhausted with {found} of {target} failures")]
    BudgetExceeded { budget: u64, found: usize, target: usize },

    #[error("no error positions in input frame {0}: frame is decoded correctly by the base decoder")]
    EmptyErrorSet(usize),

    #[error("corrupt dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
