//! Process-wide unique identifiers.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident, $counter:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        static $counter: AtomicU64 = AtomicU64::new(1);

        impl $name {
            pub(crate) fn next() -> Self {
                $name($counter.fetch_add(1, Ordering::Relaxed))
            }

            pub fn get(self) -> u64 {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// Identifier of a registered object or memory region.
    ObjectId,
    NEXT_OBJECT
);
id_type!(
    /// Identifier of an execution context.
    ContextId,
    NEXT_CONTEXT
);
id_type!(
    /// Identifier of an enqueued task.
    TaskId,
    NEXT_TASK
);
id_type!(
    /// Identifier of one begin/end marking bracket.
    BracketId,
    NEXT_BRACKET
);

impl ObjectId {
    /// Sentinel for a region whose id has not been assigned yet.
    pub const UNKNOWN: ObjectId = ObjectId(0);
}

impl ContextId {
    /// Pseudo-context used for host-side accesses (array views, `front`).
    pub const HOST: ContextId = ContextId(0);
}
