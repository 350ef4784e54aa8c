//! Analytic flop, byte and kernel-count accounting.
//!
//! Tallies are logged when a kernel is enqueued, from operand sizes only,
//! so they are exact integers and independent of scheduling.

use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::ids::ObjectId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    MatMult,
    Dot,
    Norm,
    Axpy,
    Aypx,
    Waxpy,
    Scale,
    PointwiseMult,
    Copy,
    Set,
    ScalarExpr,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelTally {
    pub count: u64,
    pub flops: u64,
    pub bytes: u64,
}

impl KernelTally {
    fn minus(self, o: KernelTally) -> KernelTally {
        KernelTally {
            count: self.count - o.count,
            flops: self.flops - o.flops,
            bytes: self.bytes - o.bytes,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopLog {
    pub total_flops: u64,
    pub matmult: KernelTally,
    pub dot: KernelTally,
    pub norm: KernelTally,
    pub axpy: KernelTally,
    pub aypx: KernelTally,
    pub waxpy: KernelTally,
    pub scale: KernelTally,
    pub pointwise: KernelTally,
    pub copy: KernelTally,
    pub set: KernelTally,
    pub scalar_expr: KernelTally,
    pub h2d: u64,
    pub d2h: u64,
}

impl FlopLog {
    fn tally_mut(&mut self, kind: KernelKind) -> &mut KernelTally {
        match kind {
            KernelKind::MatMult => &mut self.matmult,
            KernelKind::Dot => &mut self.dot,
            KernelKind::Norm => &mut self.norm,
            KernelKind::Axpy => &mut self.axpy,
            KernelKind::Aypx => &mut self.aypx,
            KernelKind::Waxpy => &mut self.waxpy,
            KernelKind::Scale => &mut self.scale,
            KernelKind::PointwiseMult => &mut self.pointwise,
            KernelKind::Copy => &mut self.copy,
            KernelKind::Set => &mut self.set,
            KernelKind::ScalarExpr => &mut self.scalar_expr,
        }
    }

    fn tallies(&self) -> [KernelTally; 11] {
        [
            self.matmult,
            self.dot,
            self.norm,
            self.axpy,
            self.aypx,
            self.waxpy,
            self.scale,
            self.pointwise,
            self.copy,
            self.set,
            self.scalar_expr,
        ]
    }

    /// Sum of the per-kernel flop tallies; always equals `total_flops`.
    pub fn sum_of_tallies(&self) -> u64 {
        self.tallies().iter().map(|t| t.flops).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.tallies().iter().map(|t| t.bytes).sum()
    }

    /// Dot products plus norms.
    pub fn reductions(&self) -> u64 {
        self.dot.count + self.norm.count
    }

    /// AXPY-family vector updates.
    pub fn vector_updates(&self) -> u64 {
        self.axpy.count + self.aypx.count + self.waxpy.count
    }

    /// Difference `self - earlier`, for logs taken from the same runtime.
    pub fn since(&self, earlier: &FlopLog) -> FlopLog {
        FlopLog {
            total_flops: self.total_flops - earlier.total_flops,
            matmult: self.matmult.minus(earlier.matmult),
            dot: self.dot.minus(earlier.dot),
            norm: self.norm.minus(earlier.norm),
            axpy: self.axpy.minus(earlier.axpy),
            aypx: self.aypx.minus(earlier.aypx),
            waxpy: self.waxpy.minus(earlier.waxpy),
            scale: self.scale.minus(earlier.scale),
            pointwise: self.pointwise.minus(earlier.pointwise),
            copy: self.copy.minus(earlier.copy),
            set: self.set.minus(earlier.set),
            scalar_expr: self.scalar_expr.minus(earlier.scalar_expr),
            h2d: self.h2d - earlier.h2d,
            d2h: self.d2h - earlier.d2h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocRecord {
    pub id: ObjectId,
    pub len: usize,
    pub alloc_ns: u64,
    pub release_ns: Option<u64>,
}

#[derive(Default)]
pub(crate) struct Stats {
    log: Mutex<FlopLog>,
    h2d: AtomicU64,
    d2h: AtomicU64,
    leaf_reads: AtomicU64,
    unsynced_host_reads: AtomicU64,
    panics: AtomicU64,
    allocs: Mutex<Vec<AllocRecord>>,
}

impl Stats {
    pub(crate) fn log_kernel(&self, kind: KernelKind, flops: u64, bytes: u64) {
        let mut log = self.log.lock();
        let t = log.tally_mut(kind);
        t.count += 1;
        t.flops += flops;
        t.bytes += bytes;
        log.total_flops += flops;
    }

    /// Flops of a scalar expression fused into another kernel.
    pub(crate) fn log_fused_expr(&self, flops: u64) {
        let mut log = self.log.lock();
        log.scalar_expr.flops += flops;
        log.total_flops += flops;
    }

    pub(crate) fn snapshot(&self) -> FlopLog {
        let mut log = self.log.lock().clone();
        log.h2d = self.h2d.load(Ordering::SeqCst);
        log.d2h = self.d2h.load(Ordering::SeqCst);
        log
    }

    pub(crate) fn reset(&self) {
        *self.log.lock() = FlopLog::default();
        self.h2d.store(0, Ordering::SeqCst);
        self.d2h.store(0, Ordering::SeqCst);
        self.leaf_reads.store(0, Ordering::SeqCst);
    }

    pub(crate) fn count_h2d(&self) {
        self.h2d.fetch_add(1, Ordering::SeqCst);
    }

    pub(crate) fn count_d2h(&self) {
        self.d2h.fetch_add(1, Ordering::SeqCst);
    }

    pub(crate) fn count_leaf_reads(&self, n: u64) {
        self.leaf_reads.fetch_add(n, Ordering::SeqCst);
    }

    pub(crate) fn leaf_reads(&self) -> u64 {
        self.leaf_reads.load(Ordering::SeqCst)
    }

    pub(crate) fn count_unsynced_host_read(&self) {
        self.unsynced_host_reads.fetch_add(1, Ordering::SeqCst);
    }

    pub(crate) fn unsynced_host_reads(&self) -> u64 {
        self.unsynced_host_reads.load(Ordering::SeqCst)
    }

    pub(crate) fn record_panic(&self) {
        self.panics.fetch_add(1, Ordering::SeqCst);
    }

    pub(crate) fn panics(&self) -> u64 {
        self.panics.load(Ordering::SeqCst)
    }

    pub(crate) fn record_alloc(&self, id: ObjectId, len: usize, at_ns: u64) {
        self.allocs.lock().push(AllocRecord {
            id,
            len,
            alloc_ns: at_ns,
            release_ns: None,
        });
    }

    pub(crate) fn record_release(&self, id: ObjectId, at_ns: u64) {
        let mut allocs = self.allocs.lock();
        if let Some(r) = allocs.iter_mut().rev().find(|r| r.id == id) {
            r.release_ns = Some(at_ns);
        }
    }

    pub(crate) fn allocations(&self) -> Vec<AllocRecord> {
        self.allocs.lock().clone()
    }

    pub(crate) fn clear_allocations(&self) {
        self.allocs.lock().retain(|r| r.release_ns.is_none());
    }
}
