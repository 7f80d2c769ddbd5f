//! Single-node transactional key-value store that keeps a version and a
//! bounded dependency list per object.
//!
//! Update transactions run under strict two-phase locking with locks taken
//! in key order, so they never deadlock and never abort. Commit assigns a
//! fresh version from a global counter, rewrites the dependency lists of
//! every written object, reports the transaction to the history sink and
//! enqueues one invalidation per written key on the lossy channel. The
//! commit step runs under a sequencer lock so that versions, history events
//! and invalidations all leave the database in the same order.

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelConfig, ChannelStats, Invalidation, LossyChannel};
use crate::history::{HistoryEvent, HistorySink, Tick, TxnId};
use crate::model::{
    merge_full_dep_list, prune_lru, AccessTuple, DepBound, DependencyList, ObjectId, Version,
    VersionClock,
};

pub type Payload = u64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub key: ObjectId,
    pub value: Payload,
    pub ver: Version,
    pub deps: DependencyList,
}

impl ObjectRecord {
    pub fn initial(key: ObjectId) -> Self {
        Self {
            key,
            value: 0,
            ver: Version::INITIAL,
            deps: DependencyList::empty(),
        }
    }

    pub fn access_tuple(&self) -> AccessTuple {
        AccessTuple::new(self.key, self.ver, self.deps.clone())
    }
}

/// An update transaction: reads every key in `read_keys`, then writes every
/// key in `write_keys`. Repeated keys are accessed once.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateTxn {
    pub txn_id: TxnId,
    pub read_keys: Vec<ObjectId>,
    pub write_keys: Vec<ObjectId>,
}

impl UpdateTxn {
    /// Read-then-write over the same keys.
    pub fn read_modify_write(txn_id: TxnId, keys: &[ObjectId]) -> Self {
        Self {
            txn_id,
            read_keys: keys.to_vec(),
            write_keys: keys.to_vec(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CommitReport {
    pub txn_id: TxnId,
    pub version: Version,
    pub written: Vec<Arc<ObjectRecord>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DbError {
    #[error("object {key} is outside the universe of {universe} objects")]
    UnknownKey { key: ObjectId, universe: usize },
    #[error("transaction {txn:?} writes {keys} keys but supplies {values} values")]
    ValueCountMismatch { txn: TxnId, keys: usize, values: usize },
    #[error("transaction {0:?} aborted by concurrency control")]
    Conflict(TxnId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbConfig {
    pub universe: usize,
    pub dep_bound: DepBound,
    pub channel: ChannelConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbStats {
    /// Single-entry reads issued by caches.
    pub entry_reads: u64,
    pub commits: u64,
    pub txn_key_reads: u64,
    pub txn_key_writes: u64,
    pub channel: ChannelStats,
}

struct CommitState {
    clock: VersionClock,
    channel: LossyChannel,
}

pub struct Database {
    records: Vec<RwLock<Arc<ObjectRecord>>>,
    locks: Vec<Mutex<()>>,
    commit: Mutex<CommitState>,
    dep_bound: DepBound,
    sink: Arc<dyn HistorySink>,
    entry_reads: AtomicU64,
    commits: AtomicU64,
    txn_key_reads: AtomicU64,
    txn_key_writes: AtomicU64,
}

impl std::fmt::Debug for Database {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Database")
            .field("universe", &self.records.len())
            .field("dep_bound", &self.dep_bound)
            .finish_non_exhaustive()
    }
}

fn dedup(keys: &[ObjectId]) -> Vec<ObjectId> {
    let mut seen = HashSet::with_capacity(keys.len());
    keys.iter().copied().filter(|k| seen.insert(*k)).collect()
}

impl Database {
    pub fn new(cfg: &DbConfig, channel_seed: u64, sink: Arc<dyn HistorySink>) -> Self {
        let records = (0..cfg.universe)
            .map(|i| RwLock::new(Arc::new(ObjectRecord::initial(ObjectId(i as u32)))))
            .collect();
        let locks = (0..cfg.universe).map(|_| Mutex::new(())).collect();
        Self {
            records,
            locks,
            commit: Mutex::new(CommitState {
                clock: VersionClock::new(),
                channel: LossyChannel::new(cfg.channel.clone(), channel_seed),
            }),
            dep_bound: cfg.dep_bound,
            sink,
            entry_reads: AtomicU64::new(0),
            commits: AtomicU64::new(0),
            txn_key_reads: AtomicU64::new(0),
            txn_key_writes: AtomicU64::new(0),
        }
    }

    pub fn universe(&self) -> usize {
        self.records.len()
    }

    pub fn dep_bound(&self) -> DepBound {
        self.dep_bound
    }

    fn check_key(&self, key: ObjectId) -> Result<(), DbError> {
        if key.index() < self.records.len() {
            Ok(())
        } else {
            Err(DbError::UnknownKey {
                key,
                universe: self.records.len(),
            })
        }
    }

    fn current(&self, key: ObjectId) -> Arc<ObjectRecord> {
        Arc::clone(&self.records[key.index()].read().unwrap())
    }

    /// Latest committed record of `key`, including version and dependency list.
    pub fn read_entry(&self, key: ObjectId) -> Result<Arc<ObjectRecord>, DbError> {
        self.check_key(key)?;
        self.entry_reads.fetch_add(1, Ordering::Relaxed);
        Ok(self.current(key))
    }

    /// Commits `txn` at logical time `now`. `new_values` pairs with the
    /// distinct write keys in order of first appearance.
    pub fn execute_update_txn(
        &self,
        txn: &UpdateTxn,
        new_values: &[Payload],
        now: Tick,
    ) -> Result<CommitReport, DbError> {
        for &k in txn.read_keys.iter().chain(txn.write_keys.iter()) {
            self.check_key(k)?;
        }
        let reads = dedup(&txn.read_keys);
        let writes = dedup(&txn.write_keys);
        if new_values.len() != writes.len() {
            return Err(DbError::ValueCountMismatch {
                txn: txn.txn_id,
                keys: writes.len(),
                values: new_values.len(),
            });
        }

        // Growing phase: every lock in key order.
        let mut lock_order: Vec<ObjectId> = reads.iter().chain(writes.iter()).copied().collect();
        lock_order.sort_unstable();
        lock_order.dedup();
        let _guards: Vec<_> = lock_order
            .iter()
            .map(|k| self.locks[k.index()].lock().unwrap())
            .collect();

        let read_set: Vec<AccessTuple> =
            reads.iter().map(|&k| self.current(k).access_tuple()).collect();
        let prior: Vec<Arc<ObjectRecord>> = writes.iter().map(|&k| self.current(k)).collect();

        let mut commit = self.commit.lock().unwrap();
        let accessed = read_set.iter().map(|t| t.ver).chain(prior.iter().map(|r| r.ver));
        let version = commit.clock.next_txn_version(accessed);

        let write_set: Vec<AccessTuple> = prior
            .iter()
            .map(|r| AccessTuple::new(r.key, version, r.deps.clone()))
            .collect();
        let full = merge_full_dep_list(&read_set, &write_set);

        let mut written = Vec::with_capacity(writes.len());
        for (&key, &value) in writes.iter().zip(new_values) {
            let own = full.without(key);
            let record = Arc::new(ObjectRecord {
                key,
                value,
                ver: version,
                deps: prune_lru(&own.entries, &own.recency, self.dep_bound),
            });
            *self.records[key.index()].write().unwrap() = Arc::clone(&record);
            written.push(record);
        }

        self.sink.record(HistoryEvent::update(
            txn.txn_id,
            read_set.iter().map(|t| (t.key, t.ver)).collect(),
            writes.iter().map(|&k| (k, version)).collect(),
            now,
        ));
        for &key in &writes {
            commit.channel.enqueue(Invalidation { key, ver: version }, now);
        }
        drop(commit);

        self.commits.fetch_add(1, Ordering::Relaxed);
        self.txn_key_reads.fetch_add(reads.len() as u64, Ordering::Relaxed);
        self.txn_key_writes.fetch_add(writes.len() as u64, Ordering::Relaxed);
        Ok(CommitReport {
            txn_id: txn.txn_id,
            version,
            written,
        })
    }

    /// Invalidations due by `now`; dropped messages never show up.
    pub fn drain_channel(&self, now: Tick) -> Vec<Invalidation> {
        self.commit.lock().unwrap().channel.drain(now)
    }

    pub fn next_invalidation_due(&self) -> Option<Tick> {
        self.commit.lock().unwrap().channel.next_due()
    }

    pub fn last_version(&self) -> Version {
        self.commit.lock().unwrap().clock.last_issued()
    }

    pub fn stats(&self) -> DbStats {
        DbStats {
            entry_reads: self.entry_reads.load(Ordering::Relaxed),
            commits: self.commits.load(Ordering::Relaxed),
            txn_key_reads: self.txn_key_reads.load(Ordering::Relaxed),
            txn_key_writes: self.txn_key_writes.load(Ordering::Relaxed),
            channel: self.commit.lock().unwrap().channel.stats(),
        }
    }
}
