use std::sync::{Arc, Weak};
use std::time::Duration;

use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::context::{Context, StreamState, StreamType, WeakContext};
use crate::deptrack::{
    AccessRecord, BracketInfo, Edge, MemoryAccessMode, Region, RegionAttributes, Tracker,
};
use crate::error::Result;
use crate::event::Event;
use crate::ids::ObjectId;
use crate::memory::MemType;
use crate::stats::{AllocRecord, FlopLog, Stats};
use crate::trace::{HostWaitRecord, Trace, TraceEntry};

#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    /// Memory space kernels operate in. `Host` never logs copies.
    pub kernel_space: MemType,
    /// Fixed delay added to every task, standing in for launch latency.
    pub launch_latency: Duration,
    /// Upper bound of an additional uniform random delay per task.
    pub jitter: Duration,
    pub seed: u64,
    pub trace: bool,
    /// Keep the bracket and edge logs used for ordering assertions.
    pub record_edges: bool,
    pub access_log_capacity: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            kernel_space: MemType::SimDevice,
            launch_latency: Duration::ZERO,
            jitter: Duration::ZERO,
            seed: 0,
            trace: true,
            record_edges: true,
            access_log_capacity: 64,
        }
    }
}

pub(crate) struct Core {
    pub(crate) config: RuntimeConfig,
    pub(crate) trace: Trace,
    pub(crate) tracker: Tracker,
    pub(crate) stats: Stats,
    pub(crate) gb_lock: Mutex<()>,
    rng: Mutex<ChaCha8Rng>,
    streams: Mutex<Vec<Weak<StreamState>>>,
    blocking: Mutex<Option<WeakContext>>,
}

impl Core {
    pub(crate) fn register_stream(&self, s: &Arc<StreamState>) {
        let mut streams = self.streams.lock();
        streams.retain(|w| w.strong_count() > 0);
        streams.push(Arc::downgrade(s));
    }

    /// Shared globally-blocking context, created on first use.
    pub(crate) fn blocking_context(self: &Arc<Core>) -> Context {
        let mut slot = self.blocking.lock();
        if let Some(ctx) = slot.as_ref().and_then(WeakContext::upgrade) {
            return ctx;
        }
        let ctx = Context::create(self, StreamType::GloballyBlocking);
        *slot = Some(ctx.downgrade());
        ctx
    }

    pub(crate) fn kernel_space(&self) -> MemType {
        self.config.kernel_space
    }

    pub(crate) fn inject_delay(&self) {
        let mut d = self.config.launch_latency;
        if !self.config.jitter.is_zero() {
            let nanos = self.config.jitter.as_nanos() as u64;
            d += Duration::from_nanos(self.rng.lock().gen_range(0..=nanos));
        }
        if !d.is_zero() {
            std::thread::sleep(d);
        }
    }

    /// Waits for the last event of every live context except `skip`.
    pub(crate) fn drain_streams(&self, skip: Option<crate::ids::ContextId>) {
        let events: Vec<Event> = {
            let streams = self.streams.lock();
            streams
                .iter()
                .filter_map(Weak::upgrade)
                .filter(|s| Some(s.id) != skip)
                .filter_map(|s| s.last_event())
                .filter(|e| !e.is_complete())
                .collect()
        };
        if events.is_empty() {
            return;
        }
        self.trace.push(TraceEntry::HostWait(HostWaitRecord {
            context: skip.unwrap_or(crate::ids::ContextId::HOST),
            task: None,
            reason: "global_drain".into(),
            time_ns: self.trace.now_ns(),
            blocked: true,
        }));
        for e in events {
            e.wait();
        }
    }

    /// Blocks the host until pending accesses conflicting with a host access
    /// of `mode` on `id` have completed.
    pub(crate) fn host_wait(&self, id: ObjectId, mode: MemoryAccessMode, reason: &str) {
        for ev in self.tracker.host_dependencies(id, mode) {
            if ev.context() == crate::ids::ContextId::HOST && ev.is_complete() {
                continue;
            }
            self.trace.push(TraceEntry::HostWait(HostWaitRecord {
                context: ev.context(),
                task: ev.task(),
                reason: reason.to_owned(),
                time_ns: self.trace.now_ns(),
                blocked: !ev.is_complete(),
            }));
            ev.wait();
        }
    }

    /// Holds `keep` alive until every outstanding access on `id` completes.
    pub(crate) fn defer_release<T: Send + Sync + 'static>(&self, id: ObjectId, keep: Arc<T>) {
        for ev in self.tracker.outstanding(id) {
            let k = keep.clone();
            ev.on_complete(move || drop(k));
        }
    }
}

/// Owner of contexts, dependency tracker, trace and counters. Cheap to clone.
#[derive(Clone)]
pub struct Runtime {
    core: Arc<Core>,
    blocking: Context,
}

impl Default for Runtime {
    fn default() -> Self {
        Runtime::new(RuntimeConfig::default())
    }
}

impl std::fmt::Debug for Runtime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runtime")
            .field("config", &self.core.config)
            .finish()
    }
}

impl Runtime {
    pub fn new(config: RuntimeConfig) -> Runtime {
        let core = Arc::new(Core {
            trace: Trace::new(config.trace),
            tracker: Tracker::new(config.record_edges, config.access_log_capacity),
            stats: Stats::default(),
            gb_lock: Mutex::new(()),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(config.seed)),
            streams: Mutex::new(Vec::new()),
            blocking: Mutex::new(None),
            config,
        });
        let blocking = core.blocking_context();
        Runtime { core, blocking }
    }

    pub(crate) fn core(&self) -> &Arc<Core> {
        &self.core
    }

    pub(crate) fn from_core(core: &Arc<Core>) -> Runtime {
        Runtime {
            core: core.clone(),
            blocking: core.blocking_context(),
        }
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.core.config
    }

    pub fn create_context(&self, stream_type: StreamType) -> Context {
        Context::create(&self.core, stream_type)
    }

    /// The runtime's shared globally-blocking context, used by synchronous
    /// operations that take no context.
    pub fn blocking_context(&self) -> &Context {
        &self.blocking
    }

    pub fn same_as(&self, other: &Runtime) -> bool {
        Arc::ptr_eq(&self.core, &other.core)
    }

    /// Waits for all work on every context of this runtime.
    pub fn synchronize_all(&self) {
        self.core.drain_streams(None);
    }

    pub fn trace(&self) -> Vec<TraceEntry> {
        self.core.trace.snapshot()
    }

    pub fn clear_trace(&self) {
        self.core.trace.clear();
    }

    pub fn set_tracing(&self, on: bool) {
        self.core.trace.set_enabled(on);
    }

    pub fn now_ns(&self) -> u64 {
        self.core.trace.now_ns()
    }

    pub fn write_trace_jsonl<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        crate::trace::write_jsonl(&self.trace(), out)
    }

    pub fn flop_log(&self) -> FlopLog {
        self.core.stats.snapshot()
    }

    pub fn reset_stats(&self) {
        self.core.stats.reset();
    }

    /// Leaf loads performed by expression kernels.
    pub fn leaf_reads(&self) -> u64 {
        self.core.stats.leaf_reads()
    }

    /// Host reads of values that still had a write pending. Always zero
    /// unless an accessor skipped its implicit synchronization.
    pub fn unsynced_host_reads(&self) -> u64 {
        self.core.stats.unsynced_host_reads()
    }

    pub fn task_panics(&self) -> u64 {
        self.core.stats.panics()
    }

    pub fn allocations(&self) -> Vec<AllocRecord> {
        self.core.stats.allocations()
    }

    pub fn clear_released_allocations(&self) {
        self.core.stats.clear_allocations();
    }

    pub fn register_memory(&self, region: Region, attrs: RegionAttributes) -> Result<RegionAttributes> {
        self.core.tracker.register_region(region, attrs)
    }

    pub fn get_region_attributes(&self, region: Region) -> Option<RegionAttributes> {
        self.core.tracker.region_attributes(region)
    }

    pub fn unregister_memory(&self, region: Region) -> bool {
        self.core.tracker.unregister_region(region)
    }

    pub fn is_registered(&self, id: ObjectId) -> bool {
        self.core.tracker.is_registered(id)
    }

    pub fn access_record(&self, id: ObjectId) -> Option<AccessRecord> {
        self.core.tracker.access_record(id)
    }

    /// Serialization edges installed so far, in installation order.
    pub fn edges(&self) -> Vec<Edge> {
        self.core.tracker.edges()
    }

    /// Closed brackets in program order.
    pub fn brackets(&self) -> Vec<BracketInfo> {
        self.core.tracker.brackets()
    }

    pub fn bracket_count(&self) -> usize {
        self.core.tracker.bracket_count()
    }

    pub fn clear_dependency_logs(&self) {
        self.core.tracker.clear_logs();
    }

    pub fn dump_access_log_json(&self) -> serde_json::Value {
        self.core.tracker.dump_json()
    }
}
