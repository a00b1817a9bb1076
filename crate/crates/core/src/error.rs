use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("position {pos} is already committed")]
    CommitToDecodedSlot { pos: usize },
    #[error("attempt to commit the mask sentinel at position {pos}")]
    MaskTokenCommit { pos: usize },
    #[error("position {pos} is outside the target (length {len})")]
    PositionOutOfRange { pos: usize, len: usize },
    #[error("token {token} is outside the vocabulary (size {size})")]
    TokenOutOfRange { token: u32, size: usize },
    #[error("no masked positions left to predict")]
    EmptyMaskSet,
    #[error("observed sequence has zero probability under the model")]
    ZeroLikelihood,
    #[error("invalid distribution: {0}")]
    InvalidDist(&'static str),
    #[error("{what} is not stochastic (row {row}: {detail})")]
    StochasticityViolation {
        what: &'static str,
        row: usize,
        detail: &'static str,
    },
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("lambda must be positive")]
    NonpositiveLambda,
    #[error("no distribution for position {0}")]
    MissingPosition(usize),
    #[error("partition window is empty")]
    EmptyWindow,
    #[error("conflict score requested for a position with itself ({0})")]
    SamePosition(usize),
    #[error("block has no masked positions")]
    EmptyBlock,
    #[error("decode step committed no tokens")]
    NoProgress,
    #[error("no previous block: cold start")]
    FirstBlock,
    #[error("enumeration needs {states} joint states, cap is {cap}")]
    TooLarge { states: u128, cap: u128 },
    #[error("invalid configuration: {field} {reason}")]
    InvalidConfig { field: &'static str, reason: &'static str },
}
