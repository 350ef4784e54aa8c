//! Access marking and automatic inter-context serialization.
//!
//! Every tracked object has an [`AccessRecord`] holding the event of its last
//! write and the events of the reads issued since. A bracket opened on a
//! context installs waits on exactly the accesses it conflicts with:
//!
//! * a read waits for the last write,
//! * a write (or read-write) waits for the last write and every read since,
//! * two reads never wait for each other,
//! * accesses from the same context need nothing, FIFO order covers them.
//!
//! Program order is the order in which brackets are closed; the tracker lock
//! serializes it across caller threads.

use std::collections::{BTreeMap, HashMap, VecDeque};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::context::Context;
use crate::error::{Error, Result};
use crate::event::Event;
use crate::ids::{BracketId, ContextId, ObjectId, TaskId};
use crate::memory::MemType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemoryAccessMode {
    Read,
    Write,
    ReadWrite,
}

impl MemoryAccessMode {
    /// Write and read-write both order against earlier readers.
    pub fn writes(self) -> bool {
        !matches!(self, MemoryAccessMode::Read)
    }

    pub(crate) fn merge(self, other: MemoryAccessMode) -> MemoryAccessMode {
        use MemoryAccessMode::*;
        match (self, other) {
            (Read, Read) => Read,
            (Write, Write) => Write,
            _ => ReadWrite,
        }
    }
}

/// Address range of a registered memory region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub addr: usize,
    pub len: usize,
}

impl Region {
    pub fn new(addr: usize, len: usize) -> Self {
        Region { addr, len }
    }

    pub fn of_slice<T>(s: &[T]) -> Self {
        Region {
            addr: s.as_ptr() as usize,
            len: std::mem::size_of_val(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionAttributes {
    pub mtype: MemType,
    pub id: ObjectId,
    pub size: usize,
    pub align: usize,
}

impl RegionAttributes {
    pub fn new(mtype: MemType, size: usize, align: usize) -> Self {
        RegionAttributes {
            mtype,
            id: ObjectId::UNKNOWN,
            size,
            align,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessLogEntry {
    pub id: ObjectId,
    pub mode: MemoryAccessMode,
    pub description: String,
    pub context: ContextId,
    pub epoch: u64,
}

/// Snapshot of the dependency state of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessRecord {
    pub id: ObjectId,
    pub last_write: Option<(ContextId, BracketId)>,
    pub readers: Vec<(ContextId, BracketId)>,
    pub log: Vec<AccessLogEntry>,
}

/// A serialization edge installed by a bracket: `waiter` may not start
/// before `waitee` has completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub waiter: BracketId,
    pub waiter_context: ContextId,
    pub waitee: BracketId,
    pub waitee_context: ContextId,
    pub object: ObjectId,
    /// The waitee had already completed when the edge was installed.
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketInfo {
    pub bracket: BracketId,
    pub context: ContextId,
    pub object: ObjectId,
    pub mode: MemoryAccessMode,
    pub description: String,
    /// Last task enqueued on the context when the bracket closed.
    pub task: Option<TaskId>,
}

/// Objects with an intrinsic tracked id.
pub trait Tracked {
    fn object_id(&self) -> ObjectId;
}

#[derive(Clone)]
struct Access {
    event: Event,
    ctx: ContextId,
    bracket: BracketId,
}

#[derive(Default)]
struct Record {
    last_write: Option<Access>,
    readers: Vec<Access>,
    log: VecDeque<AccessLogEntry>,
}

struct Open {
    mode: MemoryAccessMode,
    bracket: BracketId,
}

#[derive(Default)]
struct State {
    records: HashMap<ObjectId, Record>,
    regions: BTreeMap<usize, RegionAttributes>,
    open: HashMap<(ContextId, ObjectId), Open>,
    brackets: Vec<BracketInfo>,
    edges: Vec<Edge>,
}

const READER_COMPACT_THRESHOLD: usize = 32;

pub(crate) struct Tracker {
    state: Mutex<State>,
    graveyard: Mutex<Vec<ObjectId>>,
    record_edges: bool,
    ring_capacity: usize,
}

impl Tracker {
    pub(crate) fn new(record_edges: bool, ring_capacity: usize) -> Self {
        Tracker {
            state: Mutex::new(State::default()),
            graveyard: Mutex::new(Vec::new()),
            record_edges,
            ring_capacity: ring_capacity.max(1),
        }
    }

    fn lock(&self) -> parking_lot::MutexGuard<'_, State> {
        let dead = std::mem::take(&mut *self.graveyard.lock());
        let mut st = self.state.lock();
        for id in dead {
            st.records.remove(&id);
        }
        st
    }

    pub(crate) fn register_object(&self, id: ObjectId) {
        self.lock().records.entry(id).or_default();
    }

    /// Removal is deferred to the next tracker operation: this runs from
    /// `Drop` impls that may fire while other locks are held.
    pub(crate) fn unregister_later(&self, id: ObjectId) {
        self.graveyard.lock().push(id);
    }

    pub(crate) fn is_registered(&self, id: ObjectId) -> bool {
        self.lock().records.contains_key(&id)
    }

    pub(crate) fn has_pending_write(&self, id: ObjectId) -> bool {
        self.lock()
            .records
            .get(&id)
            .and_then(|r| r.last_write.as_ref())
            .is_some_and(|w| !w.event.is_complete())
    }

    /// Events a host-side access in `mode` has to wait for.
    pub(crate) fn host_dependencies(&self, id: ObjectId, mode: MemoryAccessMode) -> Vec<Event> {
        let st = self.lock();
        let Some(rec) = st.records.get(&id) else {
            return Vec::new();
        };
        let mut deps: Vec<Event> = rec.last_write.iter().map(|a| a.event.clone()).collect();
        if mode.writes() {
            deps.extend(rec.readers.iter().map(|a| a.event.clone()));
        }
        deps
    }

    /// Every event still outstanding on `id`, readers included.
    pub(crate) fn outstanding(&self, id: ObjectId) -> Vec<Event> {
        self.host_dependencies(id, MemoryAccessMode::Write)
            .into_iter()
            .filter(|e| !e.is_complete())
            .collect()
    }

    /// Records a host access whose completion is signalled by `event`.
    pub(crate) fn record_host_access(
        &self,
        id: ObjectId,
        mode: MemoryAccessMode,
        event: Event,
        description: &str,
    ) {
        let mut st = self.lock();
        let bracket = BracketId::next();
        self.close(&mut st, ContextId::HOST, id, mode, bracket, event, description);
    }

    pub(crate) fn begin(
        &self,
        ctx: &Context,
        id: ObjectId,
        mode: MemoryAccessMode,
        _description: &str,
    ) -> Result<BracketId> {
        let mut st = self.lock();
        let key = (ctx.id(), id);
        if st.open.contains_key(&key) {
            return Err(Error::NestedBracket { ctx: ctx.id(), id });
        }
        let rec = st.records.get(&id).ok_or(Error::UnknownObject(id))?;
        let bracket = BracketId::next();
        let mut deps: Vec<(Access, bool)> = Vec::new();
        if let Some(w) = &rec.last_write {
            if w.ctx != ctx.id() {
                deps.push((w.clone(), w.event.is_complete()));
            }
        }
        if mode.writes() {
            for r in &rec.readers {
                if r.ctx != ctx.id() {
                    deps.push((r.clone(), r.event.is_complete()));
                }
            }
        }
        for (dep, satisfied) in deps {
            if self.record_edges {
                st.edges.push(Edge {
                    waiter: bracket,
                    waiter_context: ctx.id(),
                    waitee: dep.bracket,
                    waitee_context: dep.ctx,
                    object: id,
                    satisfied,
                });
            }
            ctx.add_wait(dep.event);
        }
        st.open.insert(key, Open { mode, bracket });
        Ok(bracket)
    }

    pub(crate) fn end(
        &self,
        ctx: &Context,
        id: ObjectId,
        mode: MemoryAccessMode,
        description: &str,
    ) -> Result<()> {
        let mut st = self.lock();
        let key = (ctx.id(), id);
        let open = st
            .open
            .remove(&key)
            .ok_or(Error::UnmatchedEnd { ctx: ctx.id(), id })?;
        if open.mode != mode {
            let begin = open.mode;
            st.open.insert(key, open);
            return Err(Error::ModeMismatch { begin, end: mode });
        }
        let event = ctx.current_event();
        self.close(&mut st, ctx.id(), id, mode, open.bracket, event, description);
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn close(
        &self,
        st: &mut State,
        ctx: ContextId,
        id: ObjectId,
        mode: MemoryAccessMode,
        bracket: BracketId,
        event: Event,
        description: &str,
    ) {
        let task = event.task();
        let epoch = event.seq();
        let Some(rec) = st.records.get_mut(&id) else {
            return;
        };
        if rec.log.len() == self.ring_capacity {
            rec.log.pop_front();
        }
        rec.log.push_back(AccessLogEntry {
            id,
            mode,
            description: description.to_owned(),
            context: ctx,
            epoch,
        });
        let access = Access { event, ctx, bracket };
        if mode.writes() {
            rec.last_write = Some(access);
            rec.readers.clear();
        } else {
            if rec.readers.len() >= READER_COMPACT_THRESHOLD {
                rec.readers.retain(|r| !r.event.is_complete());
            }
            rec.readers.push(access);
        }
        if self.record_edges {
            st.brackets.push(BracketInfo {
                bracket,
                context: ctx,
                object: id,
                mode,
                description: description.to_owned(),
                task,
            });
        }
    }

    pub(crate) fn register_region(
        &self,
        region: Region,
        attrs: RegionAttributes,
    ) -> Result<RegionAttributes> {
        if region.len == 0 || attrs.size == 0 {
            return Err(Error::InvalidRegion("size must be positive".into()));
        }
        if !attrs.align.is_power_of_two() {
            return Err(Error::InvalidRegion(format!(
                "alignment {} is not a power of two",
                attrs.align
            )));
        }
        if attrs.size != region.len {
            return Err(Error::InvalidRegion(format!(
                "attribute size {} does not match region length {}",
                attrs.size, region.len
            )));
        }
        let mut st = self.lock();
        if let Some(existing) = st.regions.get(&region.addr) {
            if existing.size == attrs.size
                && existing.align == attrs.align
                && existing.mtype == attrs.mtype
            {
                return Ok(*existing);
            }
            return Err(Error::AttributeMismatch { start: region.addr });
        }
        let end = region.addr + region.len;
        let prev = st.regions.range(..region.addr).next_back();
        let next = st.regions.range(region.addr..end).next();
        for (&start, other) in prev.into_iter().chain(next) {
            if start < end && region.addr < start + other.size {
                return Err(Error::OverlappingRegion {
                    start: region.addr,
                    len: region.len,
                    other_start: start,
                    other_len: other.size,
                });
            }
        }
        let id = ObjectId::next();
        let registered = RegionAttributes { id, ..attrs };
        st.regions.insert(region.addr, registered);
        st.records.entry(id).or_default();
        Ok(registered)
    }

    pub(crate) fn region_attributes(&self, region: Region) -> Option<RegionAttributes> {
        let st = self.lock();
        let (&start, attrs) = st.regions.range(..=region.addr).next_back()?;
        (region.addr + region.len <= start + attrs.size).then_some(*attrs)
    }

    pub(crate) fn unregister_region(&self, region: Region) -> bool {
        let mut st = self.lock();
        match st.regions.remove(&region.addr) {
            Some(attrs) => {
                st.records.remove(&attrs.id);
                true
            }
            None => false,
        }
    }

    pub(crate) fn access_record(&self, id: ObjectId) -> Option<AccessRecord> {
        let st = self.lock();
        let rec = st.records.get(&id)?;
        Some(AccessRecord {
            id,
            last_write: rec.last_write.as_ref().map(|a| (a.ctx, a.bracket)),
            readers: rec.readers.iter().map(|a| (a.ctx, a.bracket)).collect(),
            log: rec.log.iter().cloned().collect(),
        })
    }

    pub(crate) fn edges(&self) -> Vec<Edge> {
        self.lock().edges.clone()
    }

    pub(crate) fn brackets(&self) -> Vec<BracketInfo> {
        self.lock().brackets.clone()
    }

    pub(crate) fn bracket_count(&self) -> usize {
        self.lock().brackets.len()
    }

    pub(crate) fn clear_logs(&self) {
        let mut st = self.lock();
        st.edges.clear();
        st.brackets.clear();
    }

    /// Per-id access log as JSON, ids in ascending order.
    pub(crate) fn dump_json(&self) -> serde_json::Value {
        let st = self.lock();
        let mut ids: Vec<&ObjectId> = st.records.keys().collect();
        ids.sort();
        let entries: Vec<&AccessLogEntry> =
            ids.into_iter().flat_map(|id| st.records[id].log.iter()).collect();
        serde_json::to_value(entries).expect("access log serializes")
    }
}

/// Opens brackets for every access, enqueues `task` on `ctx`, then closes
/// them. Duplicate ids are merged into one bracket with the combined mode.
pub(crate) fn bracketed_enqueue(
    ctx: &Context,
    label: &str,
    accesses: &[(ObjectId, MemoryAccessMode)],
    task: impl FnOnce() + Send + 'static,
) -> Result<Event> {
    let mut merged: Vec<(ObjectId, MemoryAccessMode)> = Vec::with_capacity(accesses.len());
    for &(id, mode) in accesses {
        match merged.iter_mut().find(|(m, _)| *m == id) {
            Some((_, m)) => *m = m.merge(mode),
            None => merged.push((id, mode)),
        }
    }
    let tracker = &ctx.core().tracker;
    for (i, &(id, mode)) in merged.iter().enumerate() {
        if let Err(e) = tracker.begin(ctx, id, mode, label) {
            for &(id, mode) in &merged[..i] {
                let _ = tracker.end(ctx, id, mode, label);
            }
            return Err(e);
        }
    }
    let enqueued = ctx.enqueue(label, task);
    for &(id, mode) in &merged {
        tracker.end(ctx, id, mode, label)?;
    }
    enqueued
}

impl Context {
    /// Opens an access bracket on `id`. Work enqueued on this context until
    /// the matching end is ordered after every conflicting earlier access.
    pub fn mark_intent_begin(
        &self,
        id: ObjectId,
        mode: MemoryAccessMode,
        description: &str,
    ) -> Result<()> {
        self.core().tracker.begin(self, id, mode, description).map(|_| ())
    }

    /// Closes the bracket opened by [`Context::mark_intent_begin`].
    pub fn mark_intent_end(
        &self,
        id: ObjectId,
        mode: MemoryAccessMode,
        description: &str,
    ) -> Result<()> {
        self.core().tracker.end(self, id, mode, description)
    }

    pub fn mark_object_begin(
        &self,
        object: &dyn Tracked,
        mode: MemoryAccessMode,
        description: &str,
    ) -> Result<()> {
        self.mark_intent_begin(object.object_id(), mode, description)
    }

    pub fn mark_object_end(
        &self,
        object: &dyn Tracked,
        mode: MemoryAccessMode,
        description: &str,
    ) -> Result<()> {
        self.mark_intent_end(object.object_id(), mode, description)
    }
}
