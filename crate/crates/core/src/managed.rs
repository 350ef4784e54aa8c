//! Future-valued managed arrays.
//!
//! A [`Managed`] stands in for a plain scalar (or small array) whose value may
//! still be in flight on some context. Host access through [`Managed::front`]
//! implicitly waits for the pending write; asynchronous operations consume the
//! value directly without involving the host.

use std::sync::Arc;

use crate::deptrack::{MemoryAccessMode, Tracked};
use crate::error::{Error, Result};
use crate::expr::{eval, Expr, ExecutableExpression};
use crate::ids::{ContextId, ObjectId};
use crate::memory::Buffer;
use crate::runtime::Runtime;

/// Where the authoritative value of a managed array currently lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validity {
    HostValid,
    /// Written by work on this context that has not completed yet.
    PendingOnContext(ContextId),
}

pub struct Managed {
    pub(crate) buf: Arc<Buffer>,
}

/// Real-valued managed scalar.
pub type ManagedReal = Managed;
/// Scalar-valued managed scalar; scalars are real in this build.
pub type ManagedScalar = Managed;

impl std::fmt::Debug for Managed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Managed")
            .field("id", &self.id())
            .field("len", &self.len())
            .field("validity", &self.validity())
            .finish()
    }
}

impl Managed {
    /// Zero-valued scalar.
    pub fn new(rt: &Runtime) -> Managed {
        Managed::from_value(rt, 0.0)
    }

    pub fn from_value(rt: &Runtime, v: f64) -> Managed {
        Managed {
            buf: Buffer::new(rt.core(), vec![v]),
        }
    }

    pub fn from_values(rt: &Runtime, values: &[f64]) -> Result<Managed> {
        if values.is_empty() {
            return Err(Error::ShapeMismatch {
                expected: 1,
                got: 0,
            });
        }
        Ok(Managed {
            buf: Buffer::new(rt.core(), values.to_vec()),
        })
    }

    pub fn id(&self) -> ObjectId {
        self.buf.id()
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.len() == 0
    }

    pub fn runtime(&self) -> Runtime {
        Runtime::from_core(self.buf.core())
    }

    pub fn validity(&self) -> Validity {
        let core = self.buf.core();
        match core.tracker.access_record(self.id()).and_then(|r| r.last_write) {
            Some((ctx, _)) if ctx != ContextId::HOST && core.tracker.has_pending_write(self.id()) => {
                Validity::PendingOnContext(ctx)
            }
            _ => Validity::HostValid,
        }
    }

    /// First element, waiting for any pending write.
    pub fn front(&self) -> f64 {
        self.get(0)
    }

    pub fn get(&self, i: usize) -> f64 {
        self.buf
            .core()
            .host_wait(self.id(), MemoryAccessMode::Read, "front");
        self.buf.host_read()[i]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.buf
            .core()
            .host_wait(self.id(), MemoryAccessMode::Read, "front");
        self.buf.host_read().to_vec()
    }

    /// Overwrites the value from the host, after pending accesses finish.
    pub fn set_host(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                got: values.len(),
            });
        }
        let core = self.buf.core();
        core.host_wait(self.id(), MemoryAccessMode::Write, "host write");
        self.buf
            .write(crate::memory::MemType::Host, false)
            .copy_from_slice(values);
        let done = crate::event::Event::completed_at(ContextId::HOST, 0, core.trace.now_ns());
        core.tracker
            .record_host_access(self.id(), MemoryAccessMode::Write, done, "host write");
        Ok(())
    }

    /// Assigns an expression, an evaluated expression or another managed value.
    ///
    /// A bare expression is evaluated synchronously on the runtime's globally
    /// blocking context; an [`ExecutableExpression`] runs on the context it was
    /// bound to and leaves `self` pending there.
    pub fn assign(&mut self, src: impl Into<AssignSource>) -> Result<()> {
        match src.into() {
            AssignSource::Expr(e) => eval(e, None)?.execute(self),
            AssignSource::Executable(ee) => ee.execute(self),
        }
    }

    pub fn to_expr(&self) -> Expr {
        Expr::leaf(self)
    }
}

impl Tracked for Managed {
    fn object_id(&self) -> ObjectId {
        self.id()
    }
}

impl Drop for Managed {
    fn drop(&mut self) {
        // Storage must outlive whatever is still reading or writing it.
        self.buf.core().defer_release(self.id(), self.buf.clone());
    }
}

pub enum AssignSource {
    Expr(Expr),
    Executable(ExecutableExpression),
}

impl From<Expr> for AssignSource {
    fn from(e: Expr) -> Self {
        AssignSource::Expr(e)
    }
}

impl From<&Expr> for AssignSource {
    fn from(e: &Expr) -> Self {
        AssignSource::Expr(e.clone())
    }
}

impl From<ExecutableExpression> for AssignSource {
    fn from(e: ExecutableExpression) -> Self {
        AssignSource::Executable(e)
    }
}

impl From<&ExecutableExpression> for AssignSource {
    fn from(e: &ExecutableExpression) -> Self {
        AssignSource::Executable(e.clone())
    }
}

impl From<&Managed> for AssignSource {
    fn from(m: &Managed) -> Self {
        AssignSource::Expr(Expr::leaf(m))
    }
}

impl From<f64> for AssignSource {
    fn from(v: f64) -> Self {
        AssignSource::Expr(Expr::constant(v))
    }
}
