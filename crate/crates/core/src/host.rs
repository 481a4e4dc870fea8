//! Per-trial runtime environment.
//!
//! One host per trial: the simulated clock, the event stream, the store
//! clone, and the seeded user/workspace topology. Pipeline, gate, and
//! consumer services all write through this handle, which is what confines
//! a trial's side effects to its own state.

use std::collections::BTreeMap;

use crate::clock::SimClock;
use crate::events::EventLog;
use crate::scope::{RootStore, UserRecord, WorkspaceDirectory};

#[derive(Debug)]
pub struct TrialHost {
    pub clock: SimClock,
    pub log: EventLog,
    pub store: RootStore,
    pub users: BTreeMap<String, UserRecord>,
    pub directory: WorkspaceDirectory,
}

impl TrialHost {
    pub fn new(
        log: EventLog,
        store: RootStore,
        users: BTreeMap<String, UserRecord>,
        directory: WorkspaceDirectory,
    ) -> Self {
        Self {
            clock: SimClock::new(),
            log,
            store,
            users,
            directory,
        }
    }

    pub fn user(&self, user_id: &str) -> Option<&UserRecord> {
        self.users.get(user_id)
    }
}
