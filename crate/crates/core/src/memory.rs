//! Dual host / simulated-device value arrays.

use std::sync::Arc;

use parking_lot::{
    MappedRwLockReadGuard, MappedRwLockWriteGuard, RwLock, RwLockReadGuard, RwLockWriteGuard,
};
use serde::{Deserialize, Serialize};

use crate::ids::ObjectId;
use crate::runtime::Core;

/// Memory space tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum MemType {
    Host,
    /// Second host-resident buffer standing in for device memory.
    #[default]
    SimDevice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Residency {
    Host,
    Device,
    Both,
}

struct DualArray {
    host: Vec<f64>,
    device: Vec<f64>,
    residency: Residency,
}

impl DualArray {
    fn valid_in(&self, space: MemType) -> bool {
        matches!(
            (space, self.residency),
            (_, Residency::Both) | (MemType::Host, Residency::Host) | (MemType::SimDevice, Residency::Device)
        )
    }

    fn slice(&self, space: MemType) -> &[f64] {
        match space {
            MemType::Host => &self.host,
            MemType::SimDevice => &self.device,
        }
    }

    fn slice_mut(&mut self, space: MemType) -> &mut [f64] {
        match space {
            MemType::Host => &mut self.host,
            MemType::SimDevice => &mut self.device,
        }
    }

    fn make_valid(&mut self, space: MemType, core: &Core) {
        if self.valid_in(space) {
            return;
        }
        match space {
            MemType::Host => {
                self.host.copy_from_slice(&self.device);
                core.stats.count_d2h();
            }
            MemType::SimDevice => {
                if self.device.len() != self.host.len() {
                    self.device = vec![0.0; self.host.len()];
                }
                self.device.copy_from_slice(&self.host);
                core.stats.count_h2d();
            }
        }
        self.residency = Residency::Both;
    }
}

/// Storage of a managed value or vector. Released when the last reference
/// (user handle, in-flight kernel or deferred-release hook) goes away.
pub(crate) struct Buffer {
    id: ObjectId,
    len: usize,
    data: RwLock<DualArray>,
    core: Arc<Core>,
}

impl Buffer {
    pub(crate) fn new(core: &Arc<Core>, values: Vec<f64>) -> Arc<Buffer> {
        let id = ObjectId::next();
        core.tracker.register_object(id);
        core.stats.record_alloc(id, values.len(), core.trace.now_ns());
        Arc::new(Buffer {
            id,
            len: values.len(),
            data: RwLock::new(DualArray {
                host: values,
                device: Vec::new(),
                residency: Residency::Host,
            }),
            core: core.clone(),
        })
    }

    pub(crate) fn id(&self) -> ObjectId {
        self.id
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    pub(crate) fn core(&self) -> &Arc<Core> {
        &self.core
    }

    pub(crate) fn residency(&self) -> Residency {
        self.data.read().residency
    }

    pub(crate) fn read(&self, space: MemType) -> MappedRwLockReadGuard<'_, [f64]> {
        {
            let g = self.data.read();
            if g.valid_in(space) {
                return RwLockReadGuard::map(g, |d| d.slice(space));
            }
        }
        let mut g = self.data.write();
        g.make_valid(space, &self.core);
        RwLockReadGuard::map(RwLockWriteGuard::downgrade(g), |d| d.slice(space))
    }

    /// Write access in `space`; `keep` preserves current contents (read-write).
    pub(crate) fn write(&self, space: MemType, keep: bool) -> MappedRwLockWriteGuard<'_, [f64]> {
        let mut g = self.data.write();
        if keep {
            g.make_valid(space, &self.core);
        } else if space == MemType::SimDevice && g.device.len() != self.len {
            g.device = vec![0.0; self.len];
        }
        g.residency = match space {
            MemType::Host => Residency::Host,
            MemType::SimDevice => Residency::Device,
        };
        RwLockWriteGuard::map(g, move |d| d.slice_mut(space))
    }

    /// Makes the host copy authoritative and forgets the device copy.
    pub(crate) fn drop_device_copy(&self) {
        let mut g = self.data.write();
        g.make_valid(MemType::Host, &self.core);
        g.residency = Residency::Host;
    }

    /// Host-side read. The caller must have waited for pending writers;
    /// reads that skip the wait are counted as violations.
    pub(crate) fn host_read(&self) -> MappedRwLockReadGuard<'_, [f64]> {
        if self.core.tracker.has_pending_write(self.id) {
            self.core.stats.count_unsynced_host_read();
        }
        self.read(MemType::Host)
    }
}

impl Drop for Buffer {
    fn drop(&mut self) {
        self.core.stats.record_release(self.id, self.core.trace.now_ns());
        self.core.tracker.unregister_later(self.id);
    }
}
