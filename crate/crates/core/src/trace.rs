//! Scheduler trace: per-task execution spans and host-side waits.

use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::ids::{ContextId, TaskId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: TaskId,
    pub context: ContextId,
    pub label: String,
    /// Nanoseconds since the runtime was created.
    pub start_ns: u64,
    pub end_ns: u64,
    /// Tasks on other contexts this task waited on before starting.
    pub waited_on: Vec<TaskId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostWaitRecord {
    /// Context owning the awaited work, or the waited context for a synchronize.
    pub context: ContextId,
    pub task: Option<TaskId>,
    pub reason: String,
    pub time_ns: u64,
    /// Whether the awaited work was still outstanding when the host started waiting.
    pub blocked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEntry {
    Task(TaskRecord),
    HostWait(HostWaitRecord),
}

pub(crate) struct Trace {
    epoch: Instant,
    enabled: AtomicBool,
    entries: Mutex<Vec<TraceEntry>>,
}

impl Trace {
    pub(crate) fn new(enabled: bool) -> Self {
        Self {
            epoch: Instant::now(),
            enabled: AtomicBool::new(enabled),
            entries: Mutex::new(Vec::new()),
        }
    }

    pub(crate) fn now_ns(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }

    pub(crate) fn set_enabled(&self, on: bool) {
        self.enabled.store(on, Ordering::Relaxed);
    }

    pub(crate) fn push(&self, entry: TraceEntry) {
        if self.enabled.load(Ordering::Relaxed) {
            self.entries.lock().push(entry);
        }
    }

    pub(crate) fn snapshot(&self) -> Vec<TraceEntry> {
        self.entries.lock().clone()
    }

    pub(crate) fn clear(&self) {
        self.entries.lock().clear();
    }
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write>(entries: &[TraceEntry], mut out: W) -> std::io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(text: &str) -> serde_json::Result<Vec<TraceEntry>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

pub fn tasks(entries: &[TraceEntry]) -> impl Iterator<Item = &TaskRecord> {
    entries.iter().filter_map(|e| match e {
        TraceEntry::Task(t) => Some(t),
        _ => None,
    })
}

pub fn host_waits(entries: &[TraceEntry]) -> impl Iterator<Item = &HostWaitRecord> {
    entries.iter().filter_map(|e| match e {
        TraceEntry::HostWait(w) => Some(w),
        _ => None,
    })
}
