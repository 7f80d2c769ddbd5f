//! Small-history validation: random tiny histories checked exhaustively.
//!
//! Two suites live here. The oracle suite builds random update histories
//! directly and compares the monitor's classification of each read-only
//! transaction with the brute-force search. The pipeline suite drives the
//! real database, channel and cache through random interleavings and checks
//! that no committed read-only transaction is unserializable.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{CacheMode, EdgeCache, Strategy};
use crate::channel::ChannelConfig;
use crate::db::{Database, DbConfig, UpdateTxn};
use crate::history::{EventLog, HistoryEvent, Tick, TxnId, TxnKind, TxnStatus};
use crate::model::{DepBound, ObjectId, Version};
use crate::monitor::{brute_force_serializable, Classification, Monitor, MonitorConfig};

use super::stream_seed;

/// Size limits of a random history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryShape {
    pub universe: usize,
    pub max_txns: usize,
}

impl Default for HistoryShape {
    fn default() -> Self {
        Self {
            universe: 4,
            max_txns: 10,
        }
    }
}

fn pick_keys<R: Rng + ?Sized>(rng: &mut R, universe: usize, max: usize) -> Vec<ObjectId> {
    let n = rng.gen_range(1..=max.min(universe));
    let mut all: Vec<u32> = (0..universe as u32).collect();
    all.shuffle(rng);
    all.truncate(n);
    all.sort_unstable();
    all.into_iter().map(ObjectId).collect()
}

/// A serial update history with arbitrary read and write sets, plus
/// read-only transactions that read arbitrary existing versions. Returns
/// `(updates, read_only)`; together they never exceed `shape.max_txns`.
pub fn random_history<R: Rng + ?Sized>(
    rng: &mut R,
    shape: HistoryShape,
) -> (Vec<HistoryEvent>, Vec<HistoryEvent>) {
    assert!(shape.max_txns >= 2 && shape.universe >= 1);
    let n_ro = rng.gen_range(1..=3.min(shape.max_txns - 1));
    let n_up = rng.gen_range(1..=shape.max_txns - n_ro);
    let mut latest: BTreeMap<ObjectId, Version> = BTreeMap::new();
    let mut written: BTreeMap<ObjectId, Vec<Version>> = BTreeMap::new();
    let mut updates = Vec::with_capacity(n_up);
    for i in 0..n_up {
        let ver = Version(i as u64 + 1);
        let keys = pick_keys(rng, shape.universe, 3);
        let mut reads = Vec::new();
        let mut writes = Vec::new();
        for &k in &keys {
            if rng.gen_bool(0.6) {
                reads.push((k, latest.get(&k).copied().unwrap_or_default()));
            }
            if rng.gen_bool(0.6) {
                writes.push((k, ver));
            }
        }
        if writes.is_empty() {
            writes.push((keys[0], ver));
        }
        for &(k, v) in &writes {
            latest.insert(k, v);
            written.entry(k).or_default().push(v);
        }
        updates.push(HistoryEvent::update(TxnId(i as u64 + 1), reads, writes, i as Tick));
    }
    let read_only = (0..n_ro)
        .map(|j| {
            let reads = pick_keys(rng, shape.universe, 3)
                .into_iter()
                .map(|k| {
                    let mut choices = vec![Version::INITIAL];
                    choices.extend(written.get(&k).into_iter().flatten().copied());
                    (k, *choices.choose(rng).unwrap())
                })
                .collect();
            HistoryEvent::read_only(
                TxnId(1000 + j as u64),
                TxnStatus::Committed,
                reads,
                n_up as Tick,
            )
        })
        .collect();
    (updates, read_only)
}

/// One monitor/oracle disagreement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub seed: u64,
    pub updates: Vec<HistoryEvent>,
    pub read_only: HistoryEvent,
    pub monitor: Classification,
    pub oracle_serializable: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub histories: usize,
    pub read_only_checked: usize,
    pub inconsistent_found: usize,
    pub disagreements: Vec<Disagreement>,
}

/// Classifies every read-only transaction of `histories` random histories
/// both ways.
pub fn oracle_equivalence(histories: usize, seed: u64, shape: HistoryShape) -> EquivalenceReport {
    let mut report = EquivalenceReport {
        histories,
        ..EquivalenceReport::default()
    };
    for h in 0..histories {
        let s = stream_seed(seed, h as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let (updates, read_only) = random_history(&mut rng, shape);
        let mut monitor = Monitor::new(MonitorConfig::default());
        for u in &updates {
            monitor.record_event(u.clone()).expect("generated updates are well formed");
        }
        for ro in &read_only {
            monitor.record_event(ro.clone()).expect("generated reads are well formed");
        }
        monitor.flush().expect("flush");
        for ro in read_only {
            let class = monitor.classify_read_only(ro.txn_id).expect("classified");
            let ok = brute_force_serializable(&updates, std::slice::from_ref(&ro))
                .expect("history within oracle limit");
            report.read_only_checked += 1;
            if !ok {
                report.inconsistent_found += 1;
            }
            if ok != (class == Classification::Consistent) {
                report.disagreements.push(Disagreement {
                    seed: s,
                    updates: updates.clone(),
                    read_only: ro,
                    monitor: class,
                    oracle_serializable: ok,
                });
            }
        }
    }
    report
}

/// Parameters of the pipeline suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidateOptions {
    pub trials: usize,
    pub seed: u64,
    pub dep_bound: DepBound,
    pub strategy: Strategy,
    pub drop_prob: f64,
    /// Each trial draws its object count from `2..=max_universe`.
    pub max_universe: usize,
    /// Update plus read-only transactions per trial.
    pub max_txns: usize,
    /// Counterexamples kept in the report.
    pub keep_counterexamples: usize,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 1,
            dep_bound: DepBound::Unbounded,
            strategy: Strategy::Abort,
            drop_prob: 0.2,
            max_universe: 12,
            max_txns: 10,
            keep_counterexamples: 5,
        }
    }
}

/// A failing trial, replayable from `options` and `trial_seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub options: ValidateOptions,
    pub trial: usize,
    pub trial_seed: u64,
    pub universe: usize,
    pub reason: String,
    pub events: Vec<HistoryEvent>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidateReport {
    pub trials: usize,
    pub update_commits: u64,
    pub read_only_committed: u64,
    pub read_only_aborted: u64,
    /// Committed read-only transactions the oracle cannot serialize.
    pub committed_inconsistent: u64,
    /// Trials whose committed read-only transactions cannot be serialized
    /// together, although each one can on its own.
    pub joint_failures: u64,
    /// Read-only transactions where monitor and oracle disagree.
    pub disagreements: u64,
    pub counterexamples: Vec<Counterexample>,
}

impl ValidateReport {
    pub fn passed(&self) -> bool {
        self.committed_inconsistent == 0 && self.disagreements == 0
    }
}

/// Outcome of one pipeline trial.
#[derive(Clone, Debug, Default)]
pub struct TrialOutcome {
    pub universe: usize,
    pub events: Vec<HistoryEvent>,
    pub committed_inconsistent: Vec<TxnId>,
    pub disagreements: Vec<TxnId>,
    pub joint_failure: bool,
}

enum Stream {
    Update(Vec<ObjectId>),
    ReadOnly(Vec<ObjectId>),
}

/// Runs one random interleaving through database, channel and cache.
pub fn run_trial(opts: &ValidateOptions, trial_seed: u64) -> TrialOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let universe = rng.gen_range(2..=opts.max_universe.max(2));
    let log = Arc::new(EventLog::new());
    let db = Arc::new(Database::new(
        &DbConfig {
            universe,
            dep_bound: opts.dep_bound,
            channel: ChannelConfig {
                drop_prob: opts.drop_prob,
                min_delay: 1,
                max_delay: 10,
                allow_reorder: false,
            },
        },
        rng.gen(),
        log.clone(),
    ));
    let cache = EdgeCache::new(CacheMode::TCache(opts.strategy), Arc::clone(&db), log.clone());

    let n_txns = rng.gen_range(2..=opts.max_txns.max(2));
    let n_ro = rng.gen_range(1..n_txns);
    let mut streams: Vec<(TxnId, Stream, usize)> = (0..n_txns)
        .map(|i| {
            let id = TxnId(i as u64 + 1);
            let keys = pick_keys(&mut rng, universe, 3);
            if i < n_ro {
                // reads may repeat a key
                let mut reads = keys.clone();
                if rng.gen_bool(0.2) {
                    reads.push(keys[rng.gen_range(0..keys.len())]);
                }
                (id, Stream::ReadOnly(reads), 0)
            } else {
                (id, Stream::Update(keys), 0)
            }
        })
        .collect();
    streams.shuffle(&mut rng);

    let mut now: Tick = 0;
    let mut live: Vec<usize> = (0..streams.len()).collect();
    while !live.is_empty() {
        now += rng.gen_range(0..=4);
        for inv in db.drain_channel(now) {
            cache.handle_invalidation(inv);
        }
        // earlier streams are a little more likely to move first
        let pick = live[rng.gen_range(0..live.len()).min(rng.gen_range(0..live.len()))];
        let (id, stream, pos) = &mut streams[pick];
        let done = match stream {
            Stream::Update(keys) => {
                let txn = UpdateTxn::read_modify_write(*id, keys);
                let values: Vec<u64> = keys.iter().map(|_| id.0).collect();
                db.execute_update_txn(&txn, &values, now)
                    .expect("keys are in range");
                true
            }
            Stream::ReadOnly(keys) => {
                let last = *pos + 1 == keys.len();
                let r = cache.read(*id, keys[*pos], last, now).expect("keys are in range");
                *pos += 1;
                if r.is_abort() {
                    cache.release(*id);
                    true
                } else {
                    last
                }
            }
        };
        if done {
            live.retain(|&s| s != pick);
        }
    }

    let events = log.take();
    evaluate(universe, events)
}

fn evaluate(universe: usize, events: Vec<HistoryEvent>) -> TrialOutcome {
    let updates: Vec<HistoryEvent> = events
        .iter()
        .filter(|e| e.kind == TxnKind::Update)
        .cloned()
        .collect();
    let mut monitor = Monitor::new(MonitorConfig::default());
    for e in &events {
        monitor.record_event(e.clone()).expect("pipeline events are well formed");
    }
    monitor.flush().expect("flush");

    let mut out = TrialOutcome {
        universe,
        ..TrialOutcome::default()
    };
    let mut committed = Vec::new();
    for ro in events.iter().filter(|e| e.kind == TxnKind::ReadOnly) {
        let ok = brute_force_serializable(&updates, std::slice::from_ref(ro))
            .expect("trial within oracle limit");
        let class = monitor.classify_read_only(ro.txn_id).expect("classified");
        if ok != (class == Classification::Consistent) {
            out.disagreements.push(ro.txn_id);
        }
        if ro.status == TxnStatus::Committed {
            if !ok {
                out.committed_inconsistent.push(ro.txn_id);
            }
            committed.push(ro.clone());
        }
    }
    if out.committed_inconsistent.is_empty() && committed.len() > 1 {
        out.joint_failure =
            !brute_force_serializable(&updates, &committed).expect("trial within oracle limit");
    }
    out.events = events;
    out
}

/// Runs `opts.trials` pipeline trials and tallies the outcome.
pub fn validate_small(opts: &ValidateOptions) -> ValidateReport {
    let mut report = ValidateReport {
        trials: opts.trials,
        ..ValidateReport::default()
    };
    for trial in 0..opts.trials {
        let trial_seed = stream_seed(opts.seed, trial as u64);
        let out = run_trial(opts, trial_seed);
        for e in &out.events {
            match (e.kind, e.status) {
                (TxnKind::Update, _) => report.update_commits += 1,
                (TxnKind::ReadOnly, TxnStatus::Committed) => report.read_only_committed += 1,
                (TxnKind::ReadOnly, TxnStatus::Aborted) => report.read_only_aborted += 1,
            }
        }
        report.committed_inconsistent += out.committed_inconsistent.len() as u64;
        report.disagreements += out.disagreements.len() as u64;
        report.joint_failures += out.joint_failure as u64;
        let mut reasons = Vec::new();
        if !out.committed_inconsistent.is_empty() {
            reasons.push(format!("committed inconsistent: {:?}", out.committed_inconsistent));
        }
        if !out.disagreements.is_empty() {
            reasons.push(format!("monitor disagrees with oracle: {:?}", out.disagreements));
        }
        if !reasons.is_empty() && report.counterexamples.len() < opts.keep_counterexamples {
            report.counterexamples.push(Counterexample {
                options: opts.clone(),
                trial,
                trial_seed,
                universe: out.universe,
                reason: reasons.join("; "),
                events: out.events,
            });
        }
    }
    report
}

/// Distinct keys touched by a set of events, for trace summaries.
pub fn keys_touched(events: &[HistoryEvent]) -> BTreeSet<ObjectId> {
    events
        .iter()
        .flat_map(|e| e.read_set.iter().chain(e.write_set.iter()).map(|&(k, _)| k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_histories_respect_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let shape = HistoryShape {
                universe: 5,
                max_txns: 10,
            };
            let (u, r) = random_history(&mut rng, shape);
            assert!(u.len() + r.len() <= 10);
            assert!(!u.is_empty() && !r.is_empty());
            assert!(keys_touched(&u).iter().all(|k| k.index() < 5));
        }
    }

    #[test]
    fn equivalence_small_batch() {
        let r = oracle_equivalence(200, 7, HistoryShape::default());
        assert!(r.disagreements.is_empty(), "{:?}", r.disagreements.first());
        assert!(r.inconsistent_found > 0);
    }

    #[test]
    fn pipeline_unbounded_commits_only_serializable() {
        let r = validate_small(&ValidateOptions {
            trials: 500,
            ..ValidateOptions::default()
        });
        assert!(r.passed(), "{:?}", r.counterexamples.first());
        assert!(r.read_only_committed > 0);
    }

    #[test]
    fn pipeline_without_dependencies_lets_anomalies_through() {
        let r = validate_small(&ValidateOptions {
            trials: 2000,
            dep_bound: DepBound::Finite(0),
            ..ValidateOptions::default()
        });
        assert!(r.committed_inconsistent > 0);
        assert_eq!(r.disagreements, 0);
        assert!(!r.counterexamples.is_empty());
    }

    #[test]
    fn trials_replay_from_their_seed() {
        let opts = ValidateOptions::default();
        let a = run_trial(&opts, 42);
        let b = run_trial(&opts, 42);
        assert_eq!(a.events, b.events);
    }
}
