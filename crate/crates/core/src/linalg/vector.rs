use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use parking_lot::{MappedRwLockReadGuard, MappedRwLockWriteGuard, Mutex};

use crate::deptrack::{MemoryAccessMode, Tracked};
use crate::error::{Error, Result};
use crate::event::Event;
use crate::ids::{ContextId, ObjectId};
use crate::memory::{Buffer, MemType, Residency};
use crate::runtime::Runtime;

#[derive(Default)]
struct Views {
    readers: usize,
    writer: bool,
}

/// Dense vector of reals with host and simulated-device storage.
pub struct DenseVector {
    pub(crate) buf: Arc<Buffer>,
    views: Mutex<Views>,
}

impl std::fmt::Debug for DenseVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DenseVector")
            .field("id", &self.id())
            .field("len", &self.len())
            .finish()
    }
}

impl DenseVector {
    pub fn zeros(rt: &Runtime, n: usize) -> DenseVector {
        DenseVector::from_values(rt, &vec![0.0; n])
    }

    pub fn from_values(rt: &Runtime, values: &[f64]) -> DenseVector {
        DenseVector {
            buf: Buffer::new(rt.core(), values.to_vec()),
            views: Mutex::new(Views::default()),
        }
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

    pub fn device_resident(&self) -> bool {
        self.buf.residency() != Residency::Host
    }

    /// Host copy of the values, synchronizing as needed.
    pub fn to_vec(&self) -> Result<Vec<f64>> {
        Ok(self.get_array_read()?.to_vec())
    }

    /// Overwrites all values from the host.
    pub fn set_values(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "set_values: vector has {} entries, got {}",
                self.len(),
                values.len()
            )));
        }
        self.get_array_write()?.copy_from_slice(values);
        Ok(())
    }

    /// Drops the simulated-device copy so the next kernel has to upload
    /// again. Waits for pending accesses first.
    pub fn invalidate_device_copy(&self) {
        let core = self.buf.core();
        core.host_wait(self.id(), MemoryAccessMode::ReadWrite, "invalidate");
        self.buf.drop_device_copy();
    }

    fn open_view(&self, mode: MemoryAccessMode) -> Result<Event> {
        {
            let mut v = self.views.lock();
            if v.writer || (mode.writes() && v.readers > 0) {
                return Err(Error::ViewConflict(self.id()));
            }
            if mode.writes() {
                v.writer = true;
            } else {
                v.readers += 1;
            }
        }
        let core = self.buf.core();
        let reason = if mode.writes() { "get_array" } else { "get_array_read" };
        core.host_wait(self.id(), mode, reason);
        let ev = Event::new(ContextId::HOST, 0, None);
        core.tracker
            .record_host_access(self.id(), mode, ev.clone(), reason);
        Ok(ev)
    }

    fn close_view(&self, mode: MemoryAccessMode, ev: &Event) {
        {
            let mut v = self.views.lock();
            if mode.writes() {
                v.writer = false;
            } else {
                v.readers -= 1;
            }
        }
        ev.complete(self.buf.core().trace.now_ns());
    }

    /// Read-only host view. Waits for the last pending write.
    pub fn get_array_read(&self) -> Result<ReadView<'_>> {
        let event = self.open_view(MemoryAccessMode::Read)?;
        Ok(ReadView {
            guard: Some(self.buf.host_read()),
            event,
            vec: self,
        })
    }

    /// Write-only host view; previous contents are unspecified.
    pub fn get_array_write(&self) -> Result<WriteView<'_>> {
        self.write_view(false)
    }

    /// Read-write host view.
    pub fn get_array(&self) -> Result<WriteView<'_>> {
        self.write_view(true)
    }

    fn write_view(&self, keep: bool) -> Result<WriteView<'_>> {
        let mode = if keep {
            MemoryAccessMode::ReadWrite
        } else {
            MemoryAccessMode::Write
        };
        let event = self.open_view(mode)?;
        Ok(WriteView {
            guard: Some(self.buf.write(MemType::Host, keep)),
            event,
            mode,
            vec: self,
        })
    }
}

impl Tracked for DenseVector {
    fn object_id(&self) -> ObjectId {
        self.id()
    }
}

impl Drop for DenseVector {
    fn drop(&mut self) {
        self.buf.core().defer_release(self.id(), self.buf.clone());
    }
}

/// Host view returned by [`DenseVector::get_array_read`]; restored on drop.
pub struct ReadView<'a> {
    guard: Option<MappedRwLockReadGuard<'a, [f64]>>,
    event: Event,
    vec: &'a DenseVector,
}

impl Deref for ReadView<'_> {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        self.guard.as_deref().expect("view is live")
    }
}

impl Drop for ReadView<'_> {
    fn drop(&mut self) {
        self.guard.take();
        self.vec.close_view(MemoryAccessMode::Read, &self.event);
    }
}

/// Host view returned by [`DenseVector::get_array`] and
/// [`DenseVector::get_array_write`]; restored on drop.
pub struct WriteView<'a> {
    guard: Option<MappedRwLockWriteGuard<'a, [f64]>>,
    event: Event,
    mode: MemoryAccessMode,
    vec: &'a DenseVector,
}

impl Deref for WriteView<'_> {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        self.guard.as_deref().expect("view is live")
    }
}

impl DerefMut for WriteView<'_> {
    fn deref_mut(&mut self) -> &mut [f64] {
        self.guard.as_deref_mut().expect("view is live")
    }
}

impl Drop for WriteView<'_> {
    fn drop(&mut self) {
        self.guard.take();
        self.vec.close_view(self.mode, &self.event);
    }
}
