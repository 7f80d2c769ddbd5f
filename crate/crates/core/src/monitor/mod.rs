//! Experiment-only consistency monitor.
//!
//! Receives every completed transaction, keeps the serialization graph of
//! committed updates, and classifies each read-only transaction by whether
//! its reads can be placed in a serial order of the update history.

mod graph;
pub mod oracle;

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{HistoryEvent, HistorySink, Tick, TxnId, TxnKind, TxnStatus};
use crate::model::Version;

pub use graph::{NodeIdx, SerializationGraph, INITIAL_NODE};
pub use oracle::{brute_force_serializable, OracleError, MAX_ORACLE_TXNS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MonitorError {
    #[error("malformed event from txn {txn:?}: {reason}")]
    Malformed { txn: TxnId, reason: String },
    #[error("update {txn:?} at {version} arrived after {last}")]
    OutOfOrder {
        txn: TxnId,
        version: Version,
        last: Version,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Consistent,
    Inconsistent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortClass {
    /// The partial read set was serializable: an unnecessary abort.
    WouldBeConsistent,
    WouldBeInconsistent,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    /// Extra update versions to wait for past the largest version a
    /// read-only transaction read before classifying it.
    pub horizon: u64,
}

#[derive(Clone, Copy, Debug)]
struct Classified {
    status: TxnStatus,
    class: Classification,
    timestamp: Tick,
}

/// One time bucket of read-only outcomes, as percentages of all read-only
/// transactions completed in the bucket.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub t_start: Tick,
    pub total: u64,
    pub consistent_pct: f64,
    pub inconsistent_pct: f64,
    pub abort_pct: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub committed_consistent: u64,
    pub committed_inconsistent: u64,
    pub aborted_would_be_consistent: u64,
    pub aborted_would_be_inconsistent: u64,
    pub update_commits: u64,
    pub window: Tick,
    pub series: Vec<Bucket>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MonitorReport {
    pub fn committed(&self) -> u64 {
        self.committed_consistent + self.committed_inconsistent
    }

    pub fn aborted(&self) -> u64 {
        self.aborted_would_be_consistent + self.aborted_would_be_inconsistent
    }

    pub fn read_only_total(&self) -> u64 {
        self.committed() + self.aborted()
    }

    /// Inconsistent commits out of all commits.
    pub fn inconsistency_ratio(&self) -> f64 {
        ratio(self.committed_inconsistent, self.committed())
    }

    /// Inconsistent commits out of all read-only transactions.
    pub fn uncommittable_fraction(&self) -> f64 {
        ratio(self.committed_inconsistent, self.read_only_total())
    }

    pub fn consistent_fraction(&self) -> f64 {
        ratio(self.committed_consistent, self.read_only_total())
    }

    pub fn abort_fraction(&self) -> f64 {
        ratio(self.aborted(), self.read_only_total())
    }

    /// Share of would-be-inconsistent transactions that were caught.
    pub fn detection_ratio(&self) -> f64 {
        ratio(
            self.aborted_would_be_inconsistent,
            self.aborted_would_be_inconsistent + self.committed_inconsistent,
        )
    }
}

#[derive(Debug, Default)]
pub struct Monitor {
    cfg: MonitorConfig,
    graph: SerializationGraph,
    pending: Vec<HistoryEvent>,
    classified: Vec<Classified>,
    latest: HashMap<TxnId, usize>,
}

impl Monitor {
    pub fn new(cfg: MonitorConfig) -> Self {
        Self {
            cfg,
            ..Self::default()
        }
    }

    pub fn graph(&self) -> &SerializationGraph {
        &self.graph
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Appends an event. Updates must arrive in commit order; read-only
    /// transactions are classified once every update they could depend on
    /// has been seen.
    pub fn record_event(&mut self, e: HistoryEvent) -> Result<(), MonitorError> {
        match e.kind {
            TxnKind::Update => {
                if e.status != TxnStatus::Committed {
                    return Ok(());
                }
                self.graph.add_update(&e)?;
                if !self.pending.is_empty() {
                    let last = self.graph.last_version();
                    let (ready, wait): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending)
                        .into_iter()
                        .partition(|p| self.is_ready(p, last));
                    self.pending = wait;
                    for p in ready {
                        self.classify_now(p)?;
                    }
                }
                Ok(())
            }
            TxnKind::ReadOnly => {
                if !e.write_set.is_empty() {
                    return Err(MonitorError::Malformed {
                        txn: e.txn_id,
                        reason: "read-only transaction with writes".into(),
                    });
                }
                if self.is_ready(&e, self.graph.last_version()) {
                    self.classify_now(e)
                } else {
                    self.pending.push(e);
                    Ok(())
                }
            }
        }
    }

    fn is_ready(&self, e: &HistoryEvent, last: Version) -> bool {
        let needed = e.read_set.iter().map(|&(_, v)| v.0).max().unwrap_or(0);
        last.0 >= needed.saturating_add(self.cfg.horizon)
    }

    fn classify_now(&mut self, e: HistoryEvent) -> Result<(), MonitorError> {
        let cycle = self.graph.read_only_creates_cycle(e.txn_id, &e.read_set)?;
        let class = if cycle {
            Classification::Inconsistent
        } else {
            Classification::Consistent
        };
        self.latest.insert(e.txn_id, self.classified.len());
        self.classified.push(Classified {
            status: e.status,
            class,
            timestamp: e.timestamp,
        });
        Ok(())
    }

    /// Classifies whatever is still pending against the updates seen so far.
    pub fn flush(&mut self) -> Result<(), MonitorError> {
        let mut pending = std::mem::take(&mut self.pending);
        pending.sort_by_key(|e| (e.timestamp, e.txn_id));
        for p in pending {
            self.classify_now(p)?;
        }
        Ok(())
    }

    fn lookup(&self, txn_id: TxnId) -> Option<&Classified> {
        self.latest.get(&txn_id).map(|&i| &self.classified[i])
    }

    pub fn classify_read_only(&self, txn_id: TxnId) -> Option<Classification> {
        self.lookup(txn_id).map(|c| c.class)
    }

    pub fn classify_abort(&self, txn_id: TxnId) -> Option<AbortClass> {
        self.lookup(txn_id)
            .filter(|c| c.status == TxnStatus::Aborted)
            .map(|c| match c.class {
                Classification::Consistent => AbortClass::WouldBeConsistent,
                Classification::Inconsistent => AbortClass::WouldBeInconsistent,
            })
    }

    /// Totals over transactions completed at or after `start`, plus a
    /// per-`window` time series of the three outcome bands over the whole
    /// run.
    pub fn report(&self, window: Tick, start: Tick) -> MonitorReport {
        let window = window.max(1);
        let mut r = MonitorReport {
            update_commits: self.graph.update_count() as u64,
            window,
            ..MonitorReport::default()
        };
        let last = self.classified.iter().map(|c| c.timestamp).max();
        let buckets = last.map_or(0, |t| (t / window) as usize + 1);
        let mut counts = vec![[0u64; 3]; buckets];
        for c in &self.classified {
            let band = match c.status {
                TxnStatus::Committed if c.class == Classification::Consistent => 0,
                TxnStatus::Committed => 1,
                TxnStatus::Aborted => 2,
            };
            counts[(c.timestamp / window) as usize][band] += 1;
            if c.timestamp < start {
                continue;
            }
            let total = match (c.status, c.class) {
                (TxnStatus::Committed, Classification::Consistent) => &mut r.committed_consistent,
                (TxnStatus::Committed, Classification::Inconsistent) => &mut r.committed_inconsistent,
                (TxnStatus::Aborted, Classification::Consistent) => &mut r.aborted_would_be_consistent,
                (TxnStatus::Aborted, Classification::Inconsistent) => &mut r.aborted_would_be_inconsistent,
            };
            *total += 1;
        }
        r.series = counts
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let total = c.iter().sum::<u64>();
                Bucket {
                    t_start: i as Tick * window,
                    total,
                    consistent_pct: 100.0 * ratio(c[0], total),
                    inconsistent_pct: 100.0 * ratio(c[1], total),
                    abort_pct: 100.0 * ratio(c[2], total),
                }
            })
            .collect();
        r
    }
}

/// Thread-safe sink feeding a monitor. The first error is kept and every
/// later event is ignored.
#[derive(Debug, Default)]
pub struct MonitorSink {
    inner: Mutex<(Monitor, Option<MonitorError>)>,
}

impl MonitorSink {
    pub fn new(cfg: MonitorConfig) -> Self {
        Self {
            inner: Mutex::new((Monitor::new(cfg), None)),
        }
    }

    /// Flushes pending classifications and hands back the monitor.
    pub fn finish(self) -> Result<Monitor, MonitorError> {
        let (mut m, err) = self.inner.into_inner().unwrap();
        if let Some(e) = err {
            return Err(e);
        }
        m.flush()?;
        Ok(m)
    }

    pub fn with<R>(&self, f: impl FnOnce(&Monitor) -> R) -> R {
        f(&self.inner.lock().unwrap().0)
    }
}

impl HistorySink for MonitorSink {
    fn record(&self, event: HistoryEvent) {
        let mut g = self.inner.lock().unwrap();
        if g.1.is_some() {
            return;
        }
        if let Err(e) = g.0.record_event(event) {
            g.1 = Some(e);
        }
    }
}
