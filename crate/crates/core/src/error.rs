use alloc::string::String;

/// Errors raised by the bit primitives, the clique engine and the protocols.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid witness {index} for vectors of length {len}")]
    InvalidWitness { index: usize, len: usize },

    #[error("duplicated witness index {index}")]
    DuplicateWitness { index: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("payload of {len} bits exceeds capacity {capacity}")]
    Capacity { len: usize, capacity: usize },

    #[error("node {src} already posted a message to node {dst} this round")]
    PairConflict { src: usize, dst: usize },

    #[error("node {node} cannot message itself")]
    SelfMessage { node: usize },

    #[error("node {src} reused tag {tag} / sequence number {seq} in one round")]
    DuplicateSequence { src: usize, tag: u16, seq: u32 },

    #[error("node {node} attempted to post outside a communication round")]
    PostOutsideRound { node: usize },

    #[error("phase did not complete within {limit} rounds")]
    MaxRounds { limit: u64 },

    #[error("routing precondition violated: {0}")]
    Precondition(String),

    #[error("malformed sketch: {0}")]
    MalformedSketch(&'static str),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("scheduling error: {0}")]
    Scheduling(String),

    #[error("protocol error: {0}")]
    Protocol(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
