//! Execution contexts: stream-like FIFO lanes that run work concurrently
//! with the caller.
//!
//! A `DefaultBlocking` context owns one worker thread draining its queue in
//! enqueue order. A `GloballyBlocking` context has no worker: each enqueue
//! first waits for all outstanding work on every context of the runtime and
//! then runs the task inline, so the call returns only after it finished.

use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::Event;
use crate::ids::{ContextId, TaskId};
use crate::runtime::Core;
use crate::trace::{HostWaitRecord, TaskRecord, TraceEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum StreamType {
    /// Asynchronous with respect to the caller and to other default-blocking contexts.
    #[default]
    DefaultBlocking,
    /// Every enqueue drains all prior work everywhere and completes before returning.
    GloballyBlocking,
}

thread_local! {
    static RUNNING_ON: Cell<u64> = const { Cell::new(0) };
}

pub(crate) struct StreamInner {
    epoch: u64,
    last: Option<Event>,
    pending_waits: Vec<Event>,
    closed: bool,
}

/// State shared between a context handle, its worker and the runtime registry.
pub(crate) struct StreamState {
    pub(crate) id: ContextId,
    pub(crate) stream_type: StreamType,
    inner: Mutex<StreamInner>,
}

impl StreamState {
    pub(crate) fn last_event(&self) -> Option<Event> {
        self.inner.lock().last.clone()
    }
}

struct Job {
    task: Box<dyn FnOnce() + Send>,
    event: Event,
    waits: Vec<Event>,
    label: String,
}

struct ContextShared {
    stream: Arc<StreamState>,
    core: Arc<Core>,
    tx: Mutex<Option<Sender<Job>>>,
}

impl Drop for ContextShared {
    fn drop(&mut self) {
        // The worker drains whatever is still queued and exits on its own.
        self.stream.inner.lock().closed = true;
        self.tx.lock().take();
    }
}

pub(crate) struct WeakContext(std::sync::Weak<ContextShared>);

impl WeakContext {
    pub(crate) fn upgrade(&self) -> Option<Context> {
        self.0.upgrade().map(Context)
    }
}

/// Handle to an execution context. Cloning shares the same context.
#[derive(Clone)]
pub struct Context(Arc<ContextShared>);

impl std::fmt::Debug for Context {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Context")
            .field("id", &self.id())
            .field("stream_type", &self.stream_type())
            .finish()
    }
}

impl Context {
    pub(crate) fn create(core: &Arc<Core>, stream_type: StreamType) -> Context {
        let stream = Arc::new(StreamState {
            id: ContextId::next(),
            stream_type,
            inner: Mutex::new(StreamInner {
                epoch: 0,
                last: None,
                pending_waits: Vec::new(),
                closed: false,
            }),
        });
        core.register_stream(&stream);
        let tx = match stream_type {
            StreamType::DefaultBlocking => {
                let (tx, rx) = mpsc::channel();
                let worker_stream = stream.clone();
                let worker_core = core.clone();
                thread::Builder::new()
                    .name(format!("ctx-{}", stream.id))
                    .spawn(move || worker_loop(worker_core, worker_stream, rx))
                    .expect("failed to spawn context worker");
                Some(tx)
            }
            StreamType::GloballyBlocking => None,
        };
        Context(Arc::new(ContextShared {
            stream,
            core: core.clone(),
            tx: Mutex::new(tx),
        }))
    }

    pub(crate) fn downgrade(&self) -> WeakContext {
        WeakContext(Arc::downgrade(&self.0))
    }

    pub fn id(&self) -> ContextId {
        self.0.stream.id
    }

    pub fn stream_type(&self) -> StreamType {
        self.0.stream.stream_type
    }

    /// Number of tasks enqueued so far.
    pub fn epoch(&self) -> u64 {
        self.0.stream.inner.lock().epoch
    }

    pub(crate) fn core(&self) -> &Arc<Core> {
        &self.0.core
    }

    pub(crate) fn same_runtime(&self, core: &Arc<Core>) -> bool {
        Arc::ptr_eq(&self.0.core, core)
    }

    /// Makes all work enqueued on `self` after this call start only once the
    /// work enqueued on `waitee` before this call has completed. Never blocks.
    pub fn wait_for_context(&self, waitee: &Context) -> Result<()> {
        if self.id() == waitee.id() {
            return Ok(());
        }
        if self.0.stream.inner.lock().closed {
            return Err(Error::ContextDestroyed(self.id()));
        }
        if let Some(ev) = waitee.0.stream.last_event() {
            self.add_wait(ev);
        }
        Ok(())
    }

    /// True iff every task enqueued so far has completed.
    pub fn query_idle(&self) -> bool {
        self.0
            .stream
            .inner
            .lock()
            .last
            .as_ref()
            .is_none_or(Event::is_complete)
    }

    /// Blocks the caller until all work on this context, and any work it was
    /// told to wait for, has completed.
    pub fn synchronize(&self) -> Result<()> {
        if RUNNING_ON.with(|c| c.get()) == self.id().get() {
            return Err(Error::SelfSynchronize(self.id()));
        }
        let (last, waits) = {
            let st = self.0.stream.inner.lock();
            (st.last.clone(), st.pending_waits.clone())
        };
        let blocked =
            last.as_ref().is_some_and(|e| !e.is_complete()) || waits.iter().any(|e| !e.is_complete());
        if last.is_some() || !waits.is_empty() {
            self.0.core.trace.push(TraceEntry::HostWait(HostWaitRecord {
                context: self.id(),
                task: last.as_ref().and_then(Event::task),
                reason: "synchronize".into(),
                time_ns: self.0.core.trace.now_ns(),
                blocked,
            }));
        }
        for w in &waits {
            w.wait();
        }
        if let Some(ev) = last {
            ev.wait();
        }
        Ok(())
    }

    /// Synchronizes and then closes the context. Other handles to the same
    /// context see it as destroyed afterwards.
    pub fn destroy(self) -> Result<()> {
        self.synchronize()?;
        self.0.stream.inner.lock().closed = true;
        self.0.tx.lock().take();
        Ok(())
    }

    pub(crate) fn add_wait(&self, ev: Event) {
        if ev.is_complete() || ev.context() == self.id() {
            return;
        }
        let mut st = self.0.stream.inner.lock();
        if !st.pending_waits.iter().any(|w| w.same_as(&ev)) {
            st.pending_waits.push(ev);
        }
    }

    /// Event covering all work enqueued so far.
    pub(crate) fn current_event(&self) -> Event {
        let st = self.0.stream.inner.lock();
        match &st.last {
            Some(ev) => ev.clone(),
            None => Event::completed_at(self.id(), 0, self.0.core.trace.now_ns()),
        }
    }

    /// Enqueues user work on this context. Bracket it with the marking API
    /// to have other contexts order against it.
    pub fn launch(&self, label: &str, task: impl FnOnce() + Send + 'static) -> Result<TaskId> {
        let ev = self.enqueue(label, task)?;
        Ok(ev.task().expect("enqueued events carry a task id"))
    }

    /// Appends a task to the queue. The returned event completes when the
    /// task and everything enqueued before it have finished.
    pub(crate) fn enqueue(
        &self,
        label: impl Into<String>,
        task: impl FnOnce() + Send + 'static,
    ) -> Result<Event> {
        let label = label.into();
        match self.stream_type() {
            StreamType::DefaultBlocking => {
                let mut st = self.0.stream.inner.lock();
                if st.closed {
                    return Err(Error::ContextDestroyed(self.id()));
                }
                st.epoch += 1;
                let event = Event::new(self.id(), st.epoch, Some(TaskId::next()));
                let waits: Vec<Event> = std::mem::take(&mut st.pending_waits)
                    .into_iter()
                    .filter(|e| !e.is_complete())
                    .collect();
                st.last = Some(event.clone());
                let job = Job {
                    task: Box::new(task),
                    event: event.clone(),
                    waits,
                    label,
                };
                let tx = self.0.tx.lock();
                tx.as_ref()
                    .ok_or(Error::ContextDestroyed(self.id()))?
                    .send(job)
                    .map_err(|_| Error::ContextDestroyed(self.id()))?;
                Ok(event)
            }
            StreamType::GloballyBlocking => {
                let core = &self.0.core;
                let _serial = core.gb_lock.lock();
                let (event, waits) = {
                    let mut st = self.0.stream.inner.lock();
                    if st.closed {
                        return Err(Error::ContextDestroyed(self.id()));
                    }
                    st.epoch += 1;
                    let event = Event::new(self.id(), st.epoch, Some(TaskId::next()));
                    st.last = Some(event.clone());
                    (event, std::mem::take(&mut st.pending_waits))
                };
                core.drain_streams(Some(self.id()));
                let job = Job {
                    task: Box::new(task),
                    event: event.clone(),
                    waits,
                    label,
                };
                let prev = RUNNING_ON.with(|c| c.replace(self.id().get()));
                run_job(core, self.id(), job);
                RUNNING_ON.with(|c| c.set(prev));
                Ok(event)
            }
        }
    }
}

fn worker_loop(core: Arc<Core>, stream: Arc<StreamState>, rx: Receiver<Job>) {
    RUNNING_ON.with(|c| c.set(stream.id.get()));
    while let Ok(job) = rx.recv() {
        run_job(&core, stream.id, job);
    }
}

fn run_job(core: &Core, ctx: ContextId, job: Job) {
    let Job {
        task,
        event,
        waits,
        label,
    } = job;
    for w in &waits {
        w.wait();
    }
    let start_ns = core.trace.now_ns();
    core.inject_delay();
    if catch_unwind(AssertUnwindSafe(task)).is_err() {
        core.stats.record_panic();
    }
    let end_ns = core.trace.now_ns();
    core.trace.push(TraceEntry::Task(TaskRecord {
        task: event.task().expect("enqueued events carry a task id"),
        context: ctx,
        label,
        start_ns,
        end_ns,
        waited_on: waits.iter().filter_map(Event::task).collect(),
    }));
    event.complete(end_ns);
}
