//! Transaction history records shared by the database, the cache and the
//! consistency monitor.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::model::{ObjectId, Version};

/// Logical time in milliseconds.
pub type Tick = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxnId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxnKind {
    Update,
    ReadOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxnStatus {
    Committed,
    Aborted,
}

/// A completed transaction as reported to the monitor.
///
/// Update events carry their commit version in every write pair. Read-only
/// events have an empty write set; for an aborted read-only transaction
/// the read set holds the reads answered so far plus the read that
/// triggered the abort.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEvent {
    pub txn_id: TxnId,
    pub kind: TxnKind,
    pub status: TxnStatus,
    pub read_set: Vec<(ObjectId, Version)>,
    pub write_set: Vec<(ObjectId, Version)>,
    pub timestamp: Tick,
}

impl HistoryEvent {
    pub fn update(
        txn_id: TxnId,
        read_set: Vec<(ObjectId, Version)>,
        write_set: Vec<(ObjectId, Version)>,
        timestamp: Tick,
    ) -> Self {
        Self {
            txn_id,
            kind: TxnKind::Update,
            status: TxnStatus::Committed,
            read_set,
            write_set,
            timestamp,
        }
    }

    pub fn read_only(
        txn_id: TxnId,
        status: TxnStatus,
        read_set: Vec<(ObjectId, Version)>,
        timestamp: Tick,
    ) -> Self {
        Self {
            txn_id,
            kind: TxnKind::ReadOnly,
            status,
            read_set,
            write_set: Vec::new(),
            timestamp,
        }
    }

    /// Commit version of an update event.
    pub fn commit_version(&self) -> Option<Version> {
        match (self.kind, self.status) {
            (TxnKind::Update, TxnStatus::Committed) => self.write_set.first().map(|&(_, v)| v),
            _ => None,
        }
    }
}

/// Receiver of completed transactions.
pub trait HistorySink: Send + Sync {
    fn record(&self, event: HistoryEvent);
}

/// Discards everything.
#[derive(Debug, Default)]
pub struct NullSink;

impl HistorySink for NullSink {
    fn record(&self, _event: HistoryEvent) {}
}

/// Buffers events in arrival order.
#[derive(Debug, Default)]
pub struct EventLog {
    events: Mutex<Vec<HistoryEvent>>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn take(&self) -> Vec<HistoryEvent> {
        std::mem::take(&mut *self.events.lock().unwrap())
    }

    pub fn snapshot(&self) -> Vec<HistoryEvent> {
        self.events.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.events.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl HistorySink for EventLog {
    fn record(&self, event: HistoryEvent) {
        self.events.lock().unwrap().push(event);
    }
}
