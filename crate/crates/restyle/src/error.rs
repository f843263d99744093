//! Crate-wide error type.

use std::fmt;

#[derive(Debug)]
pub enum RestyleError {
    /// A config file failed validation (empty lexicon, bad ranges, ...).
    Config(String),
    /// Token id outside the vocabulary during decode.
    InvalidTokenId(usize),
    /// Input longer than the model's maximum sequence length. Inputs are
    /// rejected rather than truncated: truncation would corrupt the style
    /// extraction.
    InputTooLong { len: usize, max: usize },
    /// An operation that needs at least one token got none.
    EmptyInput,
    /// Exemplar sets must contain at least one sentence.
    EmptyExemplarSet,
    /// Training loss became non-finite.
    Diverged { step: usize },
    /// Checkpoint file malformed or version-incompatible.
    Checkpoint(String),
    /// Candidate/reference lists of different lengths.
    LengthMismatch { candidates: usize, references: usize },
    /// Separation metric undefined (single class, or zero within-class
    /// distance).
    DegenerateSeparation(String),
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl fmt::Display for RestyleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RestyleError::Config(msg) => write!(f, "invalid config: {msg}"),
            RestyleError::InvalidTokenId(id) => write!(f, "token id {id} out of range"),
            RestyleError::InputTooLong { len, max } => {
                write!(f, "input of {len} tokens exceeds max_seq_len {max}")
            }
            RestyleError::EmptyInput => write!(f, "input is empty"),
            RestyleError::EmptyExemplarSet => write!(f, "exemplar set is empty"),
            RestyleError::Diverged { step } => {
                write!(f, "training diverged: non-finite loss at step {step}")
            }
            RestyleError::Checkpoint(msg) => write!(f, "bad checkpoint: {msg}"),
            RestyleError::LengthMismatch { candidates, references } => write!(
                f,
                "candidate/reference length mismatch: {candidates} vs {references}"
            ),
            RestyleError::DegenerateSeparation(msg) => {
                write!(f, "separation undefined: {msg}")
            }
            RestyleError::Io(e) => write!(f, "io error: {e}"),
            RestyleError::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for RestyleError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            RestyleError::Io(e) => Some(e),
            RestyleError::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for RestyleError {
    fn from(e: std::io::Error) -> Self {
        RestyleError::Io(e)
    }
}

impl From<serde_json::Error> for RestyleError {
    fn from(e: serde_json::Error) -> Self {
        RestyleError::Json(e)
    }
}

pub type Result<T> = std::result::Result<T, RestyleError>;
