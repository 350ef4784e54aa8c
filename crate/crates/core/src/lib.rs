//! Asynchronous stream programming on simulated device streams.
//!
//! Work is submitted to [`Context`]s, which run it concurrently with the
//! caller. Access brackets on registered objects let the runtime derive the
//! ordering between contexts, [`Managed`] values act as futures for scalar
//! results, and expressions over them are compiled into single kernels. The
//! Krylov solvers in [`solvers`] are built entirely on this API.

pub mod bench;
mod context;
mod deptrack;
mod error;
mod event;
pub mod expr;
mod ids;
pub mod linalg;
mod managed;
mod memory;
mod runtime;
pub mod solvers;
mod stats;
pub mod stencil;
pub mod trace;

pub use context::{Context, StreamType};
pub use deptrack::{
    AccessLogEntry, AccessRecord, BracketInfo, Edge, MemoryAccessMode, Region, RegionAttributes,
    Tracked,
};
pub use error::{Error, Result};
pub use expr::{eval, eval_with, EvalOptions, ExecutableExpression, Expr};
pub use ids::{BracketId, ContextId, ObjectId, TaskId};
pub use managed::{AssignSource, Managed, ManagedReal, ManagedScalar, Validity};
pub use memory::MemType;
pub use runtime::{Runtime, RuntimeConfig};
pub use stats::{AllocRecord, FlopLog, KernelKind, KernelTally};
