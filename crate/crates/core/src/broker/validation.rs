use std::collections::BTreeSet;

use crate::numeric::ParameterVector;

/// One disguised validation round: every member is served the snapshot
/// once and its next update is scored against it.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRound {
    snapshot: ParameterVector,
    baseline_error: f64,
    to_serve: BTreeSet<String>,
    awaiting: BTreeSet<String>,
    started_at: u64,
}

impl ValidationRound {
    pub fn new(snapshot: ParameterVector, baseline_error: f64, members: Vec<String>, now_ms: u64) -> Self {
        Self {
            snapshot,
            baseline_error,
            to_serve: members.into_iter().collect(),
            awaiting: BTreeSet::new(),
            started_at: now_ms,
        }
    }

    pub fn snapshot(&self) -> &ParameterVector {
        &self.snapshot
    }

    /// Validation error of the snapshot itself.
    pub fn baseline_error(&self) -> f64 {
        self.baseline_error
    }

    pub fn started_at(&self) -> u64 {
        self.started_at
    }

    /// Clients that still need a response scored (served or not yet served).
    pub fn pending(&self) -> impl Iterator<Item = &String> {
        self.to_serve.iter().chain(self.awaiting.iter())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.to_serve.contains(token) || self.awaiting.contains(token)
    }

    /// Marks the snapshot as sent to `token`; false if it was not owed one.
    pub(super) fn take_for_serving(&mut self, token: &str) -> bool {
        if self.to_serve.remove(token) {
            self.awaiting.insert(token.to_owned());
            true
        } else {
            false
        }
    }

    /// The client has been served the snapshot and its next update is the
    /// validation response.
    pub fn is_awaiting(&self, token: &str) -> bool {
        self.awaiting.contains(token)
    }

    pub(super) fn complete(&mut self, token: &str) {
        self.awaiting.remove(token);
    }

    pub(super) fn remove(&mut self, token: &str) {
        self.to_serve.remove(token);
        self.awaiting.remove(token);
    }

    pub fn is_finished(&self) -> bool {
        self.to_serve.is_empty() && self.awaiting.is_empty()
    }
}
