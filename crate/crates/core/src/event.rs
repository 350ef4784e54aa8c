use std::sync::Arc;

use parking_lot::{Condvar, Mutex};

use crate::ids::{ContextId, TaskId};

type Callback = Box<dyn FnOnce() + Send>;

struct EventState {
    done: bool,
    completed_ns: Option<u64>,
    callbacks: Vec<Callback>,
}

struct EventInner {
    context: ContextId,
    seq: u64,
    task: Option<TaskId>,
    state: Mutex<EventState>,
    cv: Condvar,
}

/// Completion flag for all work enqueued on a context up to `seq`.
///
/// Internal only; users never see events.
#[derive(Clone)]
pub(crate) struct Event(Arc<EventInner>);

impl Event {
    pub(crate) fn new(context: ContextId, seq: u64, task: Option<TaskId>) -> Self {
        Event(Arc::new(EventInner {
            context,
            seq,
            task,
            state: Mutex::new(EventState {
                done: false,
                completed_ns: None,
                callbacks: Vec::new(),
            }),
            cv: Condvar::new(),
        }))
    }

    pub(crate) fn completed_at(context: ContextId, seq: u64, at_ns: u64) -> Self {
        let ev = Event::new(context, seq, None);
        ev.complete(at_ns);
        ev
    }

    pub(crate) fn context(&self) -> ContextId {
        self.0.context
    }

    pub(crate) fn seq(&self) -> u64 {
        self.0.seq
    }

    pub(crate) fn task(&self) -> Option<TaskId> {
        self.0.task
    }

    pub(crate) fn is_complete(&self) -> bool {
        self.0.state.lock().done
    }

    #[cfg(test)]
    pub(crate) fn completion_ns(&self) -> Option<u64> {
        self.0.state.lock().completed_ns
    }

    pub(crate) fn wait(&self) {
        let mut st = self.0.state.lock();
        while !st.done {
            self.0.cv.wait(&mut st);
        }
    }

    /// Marks completion and runs deferred callbacks. Idempotent.
    pub(crate) fn complete(&self, at_ns: u64) {
        let callbacks = {
            let mut st = self.0.state.lock();
            if st.done {
                return;
            }
            st.done = true;
            st.completed_ns = Some(at_ns);
            std::mem::take(&mut st.callbacks)
        };
        self.0.cv.notify_all();
        for cb in callbacks {
            cb();
        }
    }

    /// Runs `f` once the event completes, or right away if it already has.
    pub(crate) fn on_complete(&self, f: impl FnOnce() + Send + 'static) {
        let mut st = self.0.state.lock();
        if st.done {
            drop(st);
            f();
        } else {
            st.callbacks.push(Box::new(f));
        }
    }

    pub(crate) fn same_as(&self, other: &Event) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl std::fmt::Debug for Event {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Event")
            .field("context", &self.0.context)
            .field("seq", &self.0.seq)
            .field("task", &self.0.task)
            .field("done", &self.is_complete())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completes_once_and_runs_callbacks() {
        let ev = Event::new(ContextId(7), 1, None);
        let hits = Arc::new(Mutex::new(0));
        let h = hits.clone();
        ev.on_complete(move || *h.lock() += 1);
        assert!(!ev.is_complete());
        ev.complete(10);
        ev.complete(20);
        assert_eq!(ev.completion_ns(), Some(10));
        assert_eq!(*hits.lock(), 1);
        let h = hits.clone();
        ev.on_complete(move || *h.lock() += 1);
        assert_eq!(*hits.lock(), 2);
        ev.wait();
    }
}
