use thiserror::Error;

use crate::deptrack::MemoryAccessMode;
use crate::ids::{ContextId, ObjectId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("context {0} has been destroyed")]
    ContextDestroyed(ContextId),

    #[error("synchronize called from inside a task running on context {0}")]
    SelfSynchronize(ContextId),

    #[error("object id {0} is not registered")]
    UnknownObject(ObjectId),

    #[error("unmatched begin already outstanding for object {id} on context {ctx}")]
    NestedBracket { ctx: ContextId, id: ObjectId },

    #[error("mark end without matching begin for object {id} on context {ctx}")]
    UnmatchedEnd { ctx: ContextId, id: ObjectId },

    #[error("mark end mode {end:?} does not match begin mode {begin:?}")]
    ModeMismatch {
        begin: MemoryAccessMode,
        end: MemoryAccessMode,
    },

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("region [{start:#x}, +{len}) overlaps registered region [{other_start:#x}, +{other_len})")]
    OverlappingRegion {
        start: usize,
        len: usize,
        other_start: usize,
        other_len: usize,
    },

    #[error("re-registration of region at {start:#x} with different attributes")]
    AttributeMismatch { start: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("conflicting host view on object {0}")]
    ViewConflict(ObjectId),

    #[error("objects belong to different runtimes")]
    RuntimeMismatch,

    #[error("malformed CSR matrix: {0}")]
    MalformedCsr(String),

    #[error("invalid stencil: {0}")]
    InvalidStencil(String),

    #[error("zero diagonal entry in row {0}")]
    ZeroDiagonal(usize),

    #[error("{method} breakdown at iteration {iteration}: {reason}")]
    Breakdown {
        method: &'static str,
        iteration: usize,
        reason: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("residual fingerprint mismatch in rep {rep}: expected {expected}, got {got}")]
    FingerprintMismatch {
        rep: usize,
        expected: String,
        got: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
