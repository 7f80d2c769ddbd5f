//! The transactional edge cache.
//!
//! Clients issue `read(txn_id, key, last_op)`. Hits are served from memory
//! and misses from a single-entry database read. In T-Cache mode every read
//! is checked against the transaction's earlier reads:
//!
//! * a dependency of the current object names a key the transaction already
//!   read at an older version (the previous read is too old), or
//! * a dependency of an earlier read names the current key at a newer
//!   version than the one being returned (the current read is too old).
//!
//! On a violation the configured [`Strategy`] decides between aborting,
//! aborting and evicting the stale entry, or reading through to the
//! database. TTL and consistency-unaware modes skip the checks and exist as
//! baselines.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Invalidation;
use crate::db::{Database, DbError, ObjectRecord, Payload};
use crate::history::{HistoryEvent, HistorySink, Tick, TxnId, TxnStatus};
use crate::model::{AccessTuple, ObjectId, Version};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Abort,
    Evict,
    Retry,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Abort => "ABORT",
            Strategy::Evict => "EVICT",
            Strategy::Retry => "RETRY",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "abort" => Ok(Strategy::Abort),
            "evict" => Ok(Strategy::Evict),
            "retry" => Ok(Strategy::Retry),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CacheMode {
    /// Dependency checks with the given strategy.
    TCache(Strategy),
    /// No checks; entries expire `ttl` ticks after insertion (`None` = never).
    Ttl(Option<Tick>),
    /// No checks, no expiry.
    Unaware,
}

#[derive(Clone, Debug)]
pub struct CacheEntry {
    pub record: Arc<ObjectRecord>,
    pub inserted_at: Tick,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A previously read version is older than the current object requires.
    PrevTooOld,
    /// The current version is older than an earlier read requires.
    CurrTooOld,
}

/// `key` was seen at `seen` although some dependency requires `required`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub key: ObjectId,
    pub required: Version,
    pub seen: Version,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Consistency {
    Consistent,
    Violation(Violation),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxnState {
    Active,
    Aborted,
}

#[derive(Clone, Debug)]
pub struct TxnRecord {
    pub txn_id: TxnId,
    pub reads: Vec<AccessTuple>,
    values: Vec<Payload>,
    pub state: TxnState,
}

impl TxnRecord {
    pub fn new(txn_id: TxnId) -> Self {
        Self {
            txn_id,
            reads: Vec::new(),
            values: Vec::new(),
            state: TxnState::Active,
        }
    }

    fn lookup(&self, key: ObjectId) -> Option<&AccessTuple> {
        self.reads.iter().find(|t| t.key == key)
    }

    pub fn push(&mut self, tuple: AccessTuple, value: Payload) {
        self.reads.push(tuple);
        self.values.push(value);
    }

    fn recorded(&self, key: ObjectId) -> Option<(Version, Payload)> {
        let i = self.reads.iter().position(|t| t.key == key)?;
        Some((self.reads[i].ver, self.values[i]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ServedFrom {
    Hit,
    Miss,
    RetryReadThrough,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AbortReason {
    Inconsistent(Violation),
    /// The transaction had already aborted on an earlier read.
    Sticky,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReadOutcome {
    Value { value: Payload, version: Version },
    Abort(AbortReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReadResult {
    pub outcome: ReadOutcome,
    pub served_from: ServedFrom,
}

impl ReadResult {
    pub fn is_abort(&self) -> bool {
        matches!(self.outcome, ReadOutcome::Abort(_))
    }

    pub fn version(&self) -> Option<Version> {
        match self.outcome {
            ReadOutcome::Value { version, .. } => Some(version),
            ReadOutcome::Abort(_) => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CacheError {
    #[error(transparent)]
    Db(#[from] DbError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub hit_ratio: f64,
    pub aborts: u64,
    /// Entries removed by the EVICT/RETRY strategies.
    pub evictions: u64,
    pub invalidation_evictions: u64,
    pub expirations: u64,
    pub retry_reads: u64,
    pub db_reads: u64,
    pub commits: u64,
}

#[derive(Default)]
struct Counters {
    hits: u64,
    misses: u64,
    aborts: u64,
    evictions: u64,
    invalidation_evictions: u64,
    expirations: u64,
    retry_reads: u64,
    db_reads: u64,
    commits: u64,
}

#[derive(Default)]
struct CacheState {
    entries: HashMap<ObjectId, CacheEntry>,
    txns: HashMap<TxnId, TxnRecord>,
    counters: Counters,
}

/// Checks the current read against everything the transaction read so far.
/// A current-too-old finding takes priority since RETRY can repair it.
pub fn check_consistency(txn: &TxnRecord, curr: &AccessTuple) -> Consistency {
    let required = txn
        .reads
        .iter()
        .filter_map(|t| t.deps.get(curr.key))
        .max();
    if let Some(required) = required.filter(|&v| v > curr.ver) {
        return Consistency::Violation(Violation {
            kind: ViolationKind::CurrTooOld,
            key: curr.key,
            required,
            seen: curr.ver,
        });
    }
    for dep in curr.deps.iter() {
        if let Some(prev) = txn.lookup(dep.key) {
            if dep.ver > prev.ver {
                return Consistency::Violation(Violation {
                    kind: ViolationKind::PrevTooOld,
                    key: dep.key,
                    required: dep.ver,
                    seen: prev.ver,
                });
            }
        }
    }
    Consistency::Consistent
}

pub struct EdgeCache {
    mode: CacheMode,
    db: Arc<Database>,
    sink: Arc<dyn HistorySink>,
    state: Mutex<CacheState>,
}

impl std::fmt::Debug for EdgeCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EdgeCache").field("mode", &self.mode).finish_non_exhaustive()
    }
}

enum Step {
    Done(ReadResult),
    Continue(Arc<ObjectRecord>, ServedFrom),
}

impl EdgeCache {
    pub fn new(mode: CacheMode, db: Arc<Database>, sink: Arc<dyn HistorySink>) -> Self {
        Self {
            mode,
            db,
            sink,
            state: Mutex::new(CacheState::default()),
        }
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    /// Transactional read. `now` stamps TTL entries and history events.
    pub fn read(
        &self,
        txn_id: TxnId,
        key: ObjectId,
        last_op: bool,
        now: Tick,
    ) -> Result<ReadResult, CacheError> {
        let mut st = self.state.lock().unwrap();
        let st = &mut *st;

        let rec = st
            .txns
            .entry(txn_id)
            .or_insert_with(|| TxnRecord::new(txn_id));
        if rec.state == TxnState::Aborted {
            if last_op {
                st.txns.remove(&txn_id);
            }
            return Ok(ReadResult {
                outcome: ReadOutcome::Abort(AbortReason::Sticky),
                served_from: ServedFrom::Hit,
            });
        }
        if let Some((version, value)) = rec.recorded(key) {
            let result = ReadResult {
                outcome: ReadOutcome::Value { value, version },
                served_from: ServedFrom::Hit,
            };
            if last_op {
                self.commit(st, txn_id, now);
            }
            return Ok(result);
        }

        let (record, served_from) = match self.fetch(st, key, now)? {
            Step::Continue(r, s) => (r, s),
            Step::Done(r) => return Ok(r),
        };

        let strategy = match self.mode {
            CacheMode::TCache(s) => Some(s),
            CacheMode::Ttl(_) | CacheMode::Unaware => None,
        };
        let (record, served_from) = match strategy {
            None => (record, served_from),
            Some(strategy) => {
                match self.apply_checks(st, txn_id, strategy, record, served_from, now)? {
                    Step::Continue(r, s) => (r, s),
                    Step::Done(r) => {
                        if last_op {
                            st.txns.remove(&txn_id);
                        }
                        return Ok(r);
                    }
                }
            }
        };

        let rec = st.txns.get_mut(&txn_id).expect("record exists");
        rec.push(record.access_tuple(), record.value);
        if last_op {
            self.commit(st, txn_id, now);
        }
        Ok(ReadResult {
            outcome: ReadOutcome::Value {
                value: record.value,
                version: record.ver,
            },
            served_from,
        })
    }

    /// Releases the record of a transaction the client gave up on.
    pub fn release(&self, txn_id: TxnId) {
        self.state.lock().unwrap().txns.remove(&txn_id);
    }

    fn fetch(&self, st: &mut CacheState, key: ObjectId, now: Tick) -> Result<Step, CacheError> {
        if let CacheMode::Ttl(Some(ttl)) = self.mode {
            if let Some(e) = st.entries.get(&key) {
                if now >= e.inserted_at.saturating_add(ttl) {
                    st.entries.remove(&key);
                    st.counters.expirations += 1;
                }
            }
        }
        if let Some(e) = st.entries.get(&key) {
            st.counters.hits += 1;
            return Ok(Step::Continue(Arc::clone(&e.record), ServedFrom::Hit));
        }
        st.counters.misses += 1;
        let record = self.read_through(st, key, now)?;
        Ok(Step::Continue(record, ServedFrom::Miss))
    }

    fn read_through(
        &self,
        st: &mut CacheState,
        key: ObjectId,
        now: Tick,
    ) -> Result<Arc<ObjectRecord>, CacheError> {
        st.counters.db_reads += 1;
        let record = self.db.read_entry(key)?;
        let keep_existing = st
            .entries
            .get(&key)
            .is_some_and(|e| e.record.ver > record.ver);
        if !keep_existing {
            st.entries.insert(
                key,
                CacheEntry {
                    record: Arc::clone(&record),
                    inserted_at: now,
                },
            );
        }
        Ok(record)
    }

    fn apply_checks(
        &self,
        st: &mut CacheState,
        txn_id: TxnId,
        strategy: Strategy,
        record: Arc<ObjectRecord>,
        served_from: ServedFrom,
        now: Tick,
    ) -> Result<Step, CacheError> {
        let curr = record.access_tuple();
        let verdict = check_consistency(&st.txns[&txn_id], &curr);
        let Consistency::Violation(v) = verdict else {
            return Ok(Step::Continue(record, served_from));
        };
        match strategy {
            Strategy::Abort => Ok(Step::Done(self.abort(st, txn_id, v, (curr.key, curr.ver), now))),
            Strategy::Evict => {
                self.evict_stale(st, v);
                Ok(Step::Done(self.abort(st, txn_id, v, (curr.key, curr.ver), now)))
            }
            Strategy::Retry => match v.kind {
                ViolationKind::PrevTooOld => {
                    self.evict_stale(st, v);
                    Ok(Step::Done(self.abort(st, txn_id, v, (curr.key, curr.ver), now)))
                }
                ViolationKind::CurrTooOld => {
                    self.evict_stale(st, v);
                    st.counters.retry_reads += 1;
                    let fresh = self.read_through(st, curr.key, now)?;
                    let again = check_consistency(&st.txns[&txn_id], &fresh.access_tuple());
                    match again {
                        Consistency::Consistent => {
                            Ok(Step::Continue(fresh, ServedFrom::RetryReadThrough))
                        }
                        Consistency::Violation(v2) => {
                            self.evict_stale(st, v2);
                            Ok(Step::Done(self.abort(st, txn_id, v2, (fresh.key, fresh.ver), now)))
                        }
                    }
                }
            },
        }
    }

    /// Removes the too-old object named by the witness, unless the cache
    /// already holds something newer.
    fn evict_stale(&self, st: &mut CacheState, v: Violation) {
        let stale = st.entries.get(&v.key).is_some_and(|e| e.record.ver <= v.seen);
        if stale {
            st.entries.remove(&v.key);
            st.counters.evictions += 1;
        }
    }

    /// Marks the transaction aborted and reports it with the reads answered
    /// so far plus the read that failed.
    fn abort(
        &self,
        st: &mut CacheState,
        txn_id: TxnId,
        v: Violation,
        curr: (ObjectId, Version),
        now: Tick,
    ) -> ReadResult {
        st.counters.aborts += 1;
        let rec = st.txns.get_mut(&txn_id).expect("record exists");
        rec.state = TxnState::Aborted;
        let mut reads: Vec<(ObjectId, Version)> =
            rec.reads.iter().map(|t| (t.key, t.ver)).collect();
        reads.push(curr);
        self.sink
            .record(HistoryEvent::read_only(txn_id, TxnStatus::Aborted, reads, now));
        ReadResult {
            outcome: ReadOutcome::Abort(AbortReason::Inconsistent(v)),
            served_from: ServedFrom::Hit,
        }
    }

    fn commit(&self, st: &mut CacheState, txn_id: TxnId, now: Tick) {
        if let Some(rec) = st.txns.remove(&txn_id) {
            st.counters.commits += 1;
            self.sink.record(HistoryEvent::read_only(
                txn_id,
                TxnStatus::Committed,
                rec.reads.iter().map(|t| (t.key, t.ver)).collect(),
                now,
            ));
        }
    }

    /// Evicts the cached copy of `inv.key` if it is older than `inv.ver`.
    /// Reads already answered are left alone.
    pub fn handle_invalidation(&self, inv: Invalidation) {
        let mut st = self.state.lock().unwrap();
        let stale = st.entries.get(&inv.key).is_some_and(|e| e.record.ver < inv.ver);
        if stale {
            st.entries.remove(&inv.key);
            st.counters.invalidation_evictions += 1;
        }
    }

    pub fn cached_version(&self, key: ObjectId) -> Option<Version> {
        self.state.lock().unwrap().entries.get(&key).map(|e| e.record.ver)
    }

    pub fn active_txns(&self) -> usize {
        self.state.lock().unwrap().txns.len()
    }

    pub fn stats(&self) -> CacheStats {
        let st = self.state.lock().unwrap();
        let c = &st.counters;
        let lookups = c.hits + c.misses;
        CacheStats {
            hits: c.hits,
            misses: c.misses,
            hit_ratio: if lookups == 0 { 0.0 } else { c.hits as f64 / lookups as f64 },
            aborts: c.aborts,
            evictions: c.evictions,
            invalidation_evictions: c.invalidation_evictions,
            expirations: c.expirations,
            retry_reads: c.retry_reads,
            db_reads: c.db_reads,
            commits: c.commits,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelConfig;
    use crate::db::{DbConfig, UpdateTxn};
    use crate::history::{EventLog, TxnKind};
    use crate::model::{DepBound, DependencyEntry, DependencyList};
    use proptest::prelude::{prop, prop_assert_eq, proptest};

    fn o(i: u32) -> ObjectId {
        ObjectId(i)
    }

    fn deps(list: &[(u32, u64)]) -> DependencyList {
        DependencyList::from_entries(list.iter().map(|&(k, v)| DependencyEntry::new(o(k), Version(v))))
    }

    fn tuple(k: u32, v: u64, d: &[(u32, u64)]) -> AccessTuple {
        AccessTuple::new(o(k), Version(v), deps(d))
    }

    fn record_with(reads: &[AccessTuple]) -> TxnRecord {
        let mut r = TxnRecord::new(TxnId(1));
        for t in reads {
            r.push(t.clone(), 0);
        }
        r
    }

    struct Rig {
        db: Arc<Database>,
        cache: EdgeCache,
        log: Arc<EventLog>,
    }

    fn rig(mode: CacheMode) -> Rig {
        let log = Arc::new(EventLog::new());
        let db = Arc::new(Database::new(
            &DbConfig {
                universe: 4,
                dep_bound: DepBound::Unbounded,
                channel: ChannelConfig::lossless(),
            },
            0,
            log.clone(),
        ));
        let cache = EdgeCache::new(mode, Arc::clone(&db), log.clone());
        Rig { db, cache, log }
    }

    impl Rig {
        fn read(&self, txn: u64, key: u32, last: bool) -> ReadResult {
            self.cache.read(TxnId(txn), o(key), last, 0).unwrap()
        }

        /// Read-modify-write of `keys`, invalidations left undelivered.
        fn update(&self, txn: u64, keys: &[u32]) -> Version {
            let keys: Vec<ObjectId> = keys.iter().map(|&k| o(k)).collect();
            let t = UpdateTxn::read_modify_write(TxnId(txn), &keys);
            let vals = vec![txn; keys.len()];
            self.db.execute_update_txn(&t, &vals, 0).unwrap().version
        }

        /// Caches x=0 and y=1 at version 0, then rewrites both at version 1
        /// without telling the cache, and drops x so the next read of x
        /// fetches the new version.
        fn stale_y(&self) {
            assert!(!self.read(100, 0, false).is_abort());
            assert!(!self.read(100, 1, true).is_abort());
            assert_eq!(self.update(200, &[0, 1]), Version(1));
            self.cache.handle_invalidation(Invalidation { key: o(0), ver: Version(1) });
            self.log.take();
        }
    }

    #[test]
    fn eq1_witness() {
        let txn = record_with(&[tuple(7, 3, &[])]);
        let v = check_consistency(&txn, &tuple(1, 9, &[(7, 5)]));
        assert_eq!(
            v,
            Consistency::Violation(Violation {
                kind: ViolationKind::PrevTooOld,
                key: o(7),
                required: Version(5),
                seen: Version(3),
            })
        );
    }

    #[test]
    fn eq2_witness() {
        let txn = record_with(&[tuple(1, 10, &[(9, 8)])]);
        let v = check_consistency(&txn, &tuple(9, 6, &[]));
        assert_eq!(
            v,
            Consistency::Violation(Violation {
                kind: ViolationKind::CurrTooOld,
                key: o(9),
                required: Version(8),
                seen: Version(6),
            })
        );
    }

    #[test]
    fn satisfied_dependency_is_consistent() {
        let txn = record_with(&[tuple(1, 5, &[(2, 4)])]);
        assert_eq!(check_consistency(&txn, &tuple(2, 4, &[])), Consistency::Consistent);
        assert_eq!(check_consistency(&txn, &tuple(2, 7, &[(1, 5)])), Consistency::Consistent);
    }

    #[test]
    fn curr_too_old_wins_when_both_match() {
        let txn = record_with(&[tuple(1, 2, &[(9, 8)])]);
        let v = check_consistency(&txn, &tuple(9, 6, &[(1, 4)]));
        assert!(matches!(
            v,
            Consistency::Violation(Violation { kind: ViolationKind::CurrTooOld, .. })
        ));
    }

    #[test]
    fn abort_on_stale_current_read() {
        let r = rig(CacheMode::TCache(Strategy::Abort));
        r.stale_y();
        assert_eq!(r.read(1, 0, false).served_from, ServedFrom::Miss);
        let res = r.read(1, 1, true);
        match res.outcome {
            ReadOutcome::Abort(AbortReason::Inconsistent(v)) => {
                assert_eq!(v.kind, ViolationKind::CurrTooOld);
                assert_eq!((v.key, v.required, v.seen), (o(1), Version(1), Version(0)));
            }
            other => panic!("{other:?}"),
        }
        // ABORT leaves the stale entry in place
        assert_eq!(r.cache.cached_version(o(1)), Some(Version(0)));
        let ev = r.log.take();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].status, TxnStatus::Aborted);
        assert_eq!(ev[0].read_set, vec![(o(0), Version(1)), (o(1), Version(0))]);
        // last_op answered with an abort still frees the record
        assert_eq!(r.cache.active_txns(), 0);
    }

    #[test]
    fn evict_removes_witness_entry() {
        let r = rig(CacheMode::TCache(Strategy::Evict));
        r.stale_y();
        r.read(1, 0, false);
        assert!(r.read(1, 1, false).is_abort());
        assert_eq!(r.cache.cached_version(o(1)), None);
        assert_eq!(r.cache.stats().evictions, 1);
        // the next reader misses and gets the fresh version
        let res = r.read(2, 1, true);
        assert_eq!(res.served_from, ServedFrom::Miss);
        assert_eq!(res.version(), Some(Version(1)));
    }

    #[test]
    fn evict_on_stale_previous_read() {
        let r = rig(CacheMode::TCache(Strategy::Evict));
        r.stale_y();
        // y read first (stale hit), then x brings a dependency on y@1
        assert_eq!(r.read(1, 1, false).version(), Some(Version(0)));
        match r.read(1, 0, false).outcome {
            ReadOutcome::Abort(AbortReason::Inconsistent(v)) => {
                assert_eq!(v.kind, ViolationKind::PrevTooOld);
                assert_eq!((v.key, v.required, v.seen), (o(1), Version(1), Version(0)));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(r.cache.cached_version(o(1)), None);
        assert_eq!(r.cache.cached_version(o(0)), Some(Version(1)));
    }

    #[test]
    fn retry_reads_through_on_stale_current() {
        let r = rig(CacheMode::TCache(Strategy::Retry));
        r.stale_y();
        r.read(1, 0, false);
        let res = r.read(1, 1, true);
        assert_eq!(res.served_from, ServedFrom::RetryReadThrough);
        assert_eq!(res.version(), Some(Version(1)));
        assert_eq!(r.cache.cached_version(o(1)), Some(Version(1)));
        let s = r.cache.stats();
        assert_eq!((s.retry_reads, s.aborts, s.commits), (1, 0, 2));
        let ev = r.log.take();
        assert_eq!(ev[0].status, TxnStatus::Committed);
        assert_eq!(ev[0].read_set, vec![(o(0), Version(1)), (o(1), Version(1))]);
    }

    #[test]
    fn retry_aborts_on_stale_previous_read() {
        let r = rig(CacheMode::TCache(Strategy::Retry));
        r.stale_y();
        r.read(1, 1, false);
        assert!(r.read(1, 0, false).is_abort());
        assert_eq!(r.cache.cached_version(o(1)), None);
        assert_eq!(r.cache.stats().retry_reads, 0);
    }

    #[test]
    fn retry_gives_up_after_one_attempt() {
        // an earlier read demands a version of y the database never wrote,
        // so the one retry cannot repair it
        let r = rig(CacheMode::TCache(Strategy::Retry));
        r.read(100, 1, true); // caches y@0
        r.update(1, &[0, 1]); // x@1, y@1
        r.update(2, &[1, 2]); // y@2 depends on z@2 and x@1
        let mut txn = TxnRecord::new(TxnId(5));
        txn.push(tuple(3, 1, &[(1, 99)]), 0);
        r.cache.state.lock().unwrap().txns.insert(TxnId(5), txn);
        let res = r.read(5, 1, false);
        match res.outcome {
            ReadOutcome::Abort(AbortReason::Inconsistent(v)) => {
                assert_eq!(v.kind, ViolationKind::CurrTooOld);
                assert_eq!(v.seen, Version(2));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(r.cache.stats().retry_reads, 1);
    }

    #[test]
    fn aborts_stick_until_last_op() {
        let r = rig(CacheMode::TCache(Strategy::Abort));
        r.stale_y();
        r.read(1, 0, false);
        assert!(r.read(1, 1, false).is_abort());
        assert_eq!(r.cache.active_txns(), 1);
        let again = r.read(1, 2, false);
        assert_eq!(again.outcome, ReadOutcome::Abort(AbortReason::Sticky));
        assert_eq!(r.read(1, 3, true).outcome, ReadOutcome::Abort(AbortReason::Sticky));
        assert_eq!(r.cache.active_txns(), 0);
        // the id is fresh again
        assert!(!r.read(1, 2, true).is_abort());
        // one aborted event only, then the fresh commit
        let ev = r.log.take();
        assert_eq!(ev.iter().filter(|e| e.status == TxnStatus::Aborted).count(), 1);
        assert_eq!(ev.last().unwrap().status, TxnStatus::Committed);
    }

    #[test]
    fn repeat_reads_return_recorded_version() {
        let r = rig(CacheMode::TCache(Strategy::Abort));
        let first = r.read(1, 0, false);
        r.update(2, &[0]);
        r.cache.handle_invalidation(Invalidation { key: o(0), ver: Version(1) });
        let again = r.read(1, 0, true);
        assert_eq!(again.outcome, first.outcome);
        assert_eq!(again.version(), Some(Version(0)));
        let ev = r.log.take();
        let ro = ev.iter().find(|e| e.kind == TxnKind::ReadOnly).unwrap();
        assert_eq!(ro.read_set, vec![(o(0), Version(0))]);
    }

    #[test]
    fn record_is_collected_after_last_op() {
        let r = rig(CacheMode::TCache(Strategy::Abort));
        r.read(1, 0, false);
        assert_eq!(r.cache.active_txns(), 1);
        r.read(1, 1, true);
        assert_eq!(r.cache.active_txns(), 0);
        r.read(2, 0, false);
        r.cache.release(TxnId(2));
        assert_eq!(r.cache.active_txns(), 0);
    }

    #[test]
    fn invalidation_cases() {
        let r = rig(CacheMode::Unaware);
        r.read(1, 0, true);
        r.update(2, &[0]);
        r.update(3, &[0]);
        // same version: keep
        r.cache.handle_invalidation(Invalidation { key: o(0), ver: Version(0) });
        assert_eq!(r.cache.cached_version(o(0)), Some(Version(0)));
        // newer version: evict
        r.cache.handle_invalidation(Invalidation { key: o(0), ver: Version(2) });
        assert_eq!(r.cache.cached_version(o(0)), None);
        // uncached key: no-op
        r.cache.handle_invalidation(Invalidation { key: o(3), ver: Version(9) });
        assert_eq!(r.cache.stats().invalidation_evictions, 1);
        // refill at the latest version, then a late invalidation for an
        // older one leaves it alone
        assert_eq!(r.read(4, 0, true).version(), Some(Version(2)));
        r.cache.handle_invalidation(Invalidation { key: o(0), ver: Version(1) });
        assert_eq!(r.cache.cached_version(o(0)), Some(Version(2)));
    }

    #[test]
    fn ttl_zero_always_misses() {
        let r = rig(CacheMode::Ttl(Some(0)));
        for t in 0..10 {
            assert_eq!(r.read(t, 0, true).served_from, ServedFrom::Miss);
        }
        let s = r.cache.stats();
        assert_eq!((s.hits, s.misses, s.db_reads), (0, 10, 10));
        assert_eq!(r.db.stats().entry_reads, 10);
    }

    #[test]
    fn ttl_expiry_and_infinite_ttl() {
        let r = rig(CacheMode::Ttl(Some(100)));
        assert_eq!(r.cache.read(TxnId(1), o(0), true, 0).unwrap().served_from, ServedFrom::Miss);
        assert_eq!(r.cache.read(TxnId(2), o(0), true, 99).unwrap().served_from, ServedFrom::Hit);
        assert_eq!(r.cache.read(TxnId(3), o(0), true, 100).unwrap().served_from, ServedFrom::Miss);
        assert_eq!(r.cache.stats().expirations, 1);

        let r = rig(CacheMode::Ttl(None));
        r.read(1, 0, true);
        for t in 2..50 {
            assert_eq!(
                r.cache.read(TxnId(t), o(0), true, t * 1_000_000).unwrap().served_from,
                ServedFrom::Hit
            );
        }
    }

    #[test]
    fn baselines_never_abort() {
        for mode in [CacheMode::Unaware, CacheMode::Ttl(None)] {
            let r = rig(mode);
            r.stale_y();
            r.read(1, 0, false);
            let res = r.read(1, 1, true);
            assert_eq!(res.version(), Some(Version(0)));
            assert_eq!(r.cache.stats().aborts, 0);
        }
    }

    #[test]
    fn warm_cache_without_updates_hits() {
        let r = rig(CacheMode::TCache(Strategy::Abort));
        for k in 0..4 {
            assert_eq!(r.read(k as u64, k, true).served_from, ServedFrom::Miss);
        }
        let before = r.db.stats().entry_reads;
        for t in 10..110 {
            assert_eq!(r.read(t, (t % 4) as u32, true).served_from, ServedFrom::Hit);
        }
        assert_eq!(r.db.stats().entry_reads, before);
        let s = r.cache.stats();
        assert_eq!(s.misses, 4);
        assert!((s.hit_ratio - 100.0 / 104.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let r = rig(CacheMode::TCache(Strategy::Abort));
        assert!(matches!(
            r.cache.read(TxnId(1), o(99), true, 0),
            Err(CacheError::Db(_))
        ));
    }

    fn brute_force(reads: &[AccessTuple], curr: &AccessTuple) -> Option<ViolationKind> {
        let mut curr_old = false;
        let mut prev_old = false;
        for r in reads {
            for d in r.deps.iter() {
                if d.key == curr.key && d.ver > curr.ver {
                    curr_old = true;
                }
            }
            for d in curr.deps.iter() {
                if d.key == r.key && d.ver > r.ver {
                    prev_old = true;
                }
            }
        }
        if curr_old {
            Some(ViolationKind::CurrTooOld)
        } else if prev_old {
            Some(ViolationKind::PrevTooOld)
        } else {
            None
        }
    }

    type Spec = (u64, Vec<(u32, u64)>);

    fn arb_spec() -> impl proptest::strategy::Strategy<Value = Spec> {
        (0u64..6, prop::collection::vec((0u32..6, 0u64..6), 0..4))
    }

    fn from_spec(key: u32, (v, d): &Spec) -> AccessTuple {
        let d: Vec<(u32, u64)> = d.iter().copied().filter(|&(k, _)| k != key).collect();
        tuple(key, *v, &d)
    }

    proptest! {
        #[test]
        fn check_matches_pairwise_scan(
            specs in prop::collection::vec(prop::option::of(arb_spec()), 6),
            curr_key in 0u32..6,
            curr in arb_spec(),
        ) {
            let reads: Vec<AccessTuple> = specs
                .iter()
                .enumerate()
                .filter(|&(k, _)| k as u32 != curr_key)
                .filter_map(|(k, s)| s.as_ref().map(|s| from_spec(k as u32, s)))
                .collect();
            let curr = from_spec(curr_key, &curr);
            let expected = brute_force(&reads, &curr);
            let got = match check_consistency(&record_with(&reads), &curr) {
                Consistency::Consistent => None,
                Consistency::Violation(v) => Some(v.kind),
            };
            prop_assert_eq!(got, expected);
        }
    }
}
