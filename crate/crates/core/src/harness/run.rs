//! Wires database, channel, cache, monitor and workload together and runs
//! one experiment.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{CacheError, CacheStats, EdgeCache};
use crate::db::{Database, DbConfig, DbError, DbStats, UpdateTxn};
use crate::history::{Tick, TxnId};
use crate::model::ObjectId;
use crate::monitor::{MonitorError, MonitorReport, MonitorSink};
use crate::workload::graph::{gen_graph_txn, Graph, GraphError};
use crate::workload::synthetic::SyntheticSpec;
use crate::workload::{TxnKind, TxnRequest};

use super::config::{ConfigError, ExecMode, ExperimentConfig, WorkloadSpec};
use super::stream_seed;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("monitor rejected the history: {0}")]
    Monitor(#[from] MonitorError),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

// rng sub-streams
const STREAM_GRAPH: u64 = 0;
const STREAM_CHANNEL: u64 = 1;
const STREAM_UPDATES: u64 = 2;
const STREAM_READS: u64 = 3;

/// A ready-to-sample workload.
#[derive(Clone, Debug)]
pub enum Workload {
    Synthetic(SyntheticSpec),
    Graph { graph: Graph, walk_len: usize },
}

impl Workload {
    /// Builds the workload of `cfg`, applying time compression and
    /// down-sampling graphs with the run's graph stream.
    pub fn build(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        Ok(match &cfg.workload {
            WorkloadSpec::Synthetic(s) => {
                let mut s = s.clone();
                let scale = |t: Tick| ((t as f64 / cfg.time_compression).round() as Tick).max(1);
                if let Some(d) = s.drift.as_mut() {
                    d.period = scale(d.period);
                }
                if let Some(f) = s.formation.as_mut() {
                    f.switch_time = scale(f.switch_time);
                }
                Workload::Synthetic(s)
            }
            WorkloadSpec::Graph(g) => {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, STREAM_GRAPH));
                Workload::Graph {
                    graph: g.build(&mut rng)?,
                    walk_len: g.walk_len,
                }
            }
        })
    }

    pub fn universe(&self) -> usize {
        match self {
            Workload::Synthetic(s) => s.universe,
            Workload::Graph { graph, .. } => graph.node_count(),
        }
    }

    pub fn keys<R: Rng + ?Sized>(&self, now: Tick, rng: &mut R) -> Vec<ObjectId> {
        match self {
            Workload::Synthetic(s) => s.gen_txn(now, rng),
            Workload::Graph { graph, walk_len } => gen_graph_txn(graph, *walk_len, rng),
        }
    }

    pub fn request<R: Rng + ?Sized>(&self, kind: TxnKind, now: Tick, rng: &mut R) -> TxnRequest {
        TxnRequest {
            kind,
            keys: self.keys(now, rng),
            issue_time: now,
        }
    }
}

/// Issue time of the `i`-th transaction of a stream at `rate` per second.
fn arrival(i: u64, rate: f64) -> Tick {
    (i as f64 * 1000.0 / rate).floor() as Tick
}

fn arrivals(rate: f64, duration: Tick) -> impl Iterator<Item = Tick> {
    (0u64..)
        .map(move |i| if rate > 0.0 { arrival(i, rate) } else { Tick::MAX })
        .take_while(move |&t| t < duration)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub report: MonitorReport,
    pub cache: CacheStats,
    pub db: DbStats,
    pub updates_issued: u64,
    pub reads_issued: u64,
    /// Cache-originated database reads per simulated second.
    pub db_reads_per_s: f64,
}

/// One update transaction: read then write every key.
fn run_update(db: &Database, id: TxnId, keys: &[ObjectId], now: Tick) -> Result<(), DbError> {
    let txn = UpdateTxn::read_modify_write(id, keys);
    let distinct = {
        let mut seen = std::collections::HashSet::new();
        keys.iter().filter(|k| seen.insert(**k)).count()
    };
    db.execute_update_txn(&txn, &vec![id.0; distinct], now)?;
    Ok(())
}

/// One read-only transaction as a sequence of cache reads, the last one
/// flagged. Stops at the first abort.
fn run_read_only(cache: &EdgeCache, id: TxnId, keys: &[ObjectId], now: Tick) -> Result<(), CacheError> {
    for (i, &k) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        let r = cache.read(id, k, last, now)?;
        if r.is_abort() {
            if !last {
                cache.release(id);
            }
            break;
        }
    }
    Ok(())
}

/// Runs `cfg` and returns the monitor report plus cache and database
/// counters. Deterministic mode is a pure function of the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult, HarnessError> {
    cfg.validate()?;
    let workload = Workload::build(cfg)?;
    let sink = Arc::new(MonitorSink::new(cfg.monitor));
    let db = Arc::new(Database::new(
        &DbConfig {
            universe: workload.universe(),
            dep_bound: cfg.cache.dependency_bound,
            channel: cfg.channel.clone(),
        },
        stream_seed(cfg.seed, STREAM_CHANNEL),
        sink.clone(),
    ));
    let cache = EdgeCache::new(cfg.cache.cache_mode(), Arc::clone(&db), sink.clone());

    let (updates, reads) = match cfg.exec {
        ExecMode::Deterministic => simulate(cfg, &workload, &db, &cache)?,
        ExecMode::Concurrent => run_concurrent(cfg, &workload, &db, &cache)?,
    };

    let cache_stats = cache.stats();
    let db_stats = db.stats();
    drop(cache);
    drop(db);
    let sink = Arc::try_unwrap(sink).expect("components dropped");
    let monitor = sink.finish()?;
    let report = monitor.report(cfg.report_bucket_ms, cfg.warmup_ms);
    Ok(RunResult {
        config: cfg.clone(),
        report,
        cache: cache_stats,
        db: db_stats,
        updates_issued: updates,
        reads_issued: reads,
        db_reads_per_s: cache_stats.db_reads as f64 * 1000.0 / cfg.duration_ms as f64,
    })
}

/// Discrete-event loop: at each instant, due invalidations first, then the
/// update arrival, then the read arrival.
fn simulate(
    cfg: &ExperimentConfig,
    workload: &Workload,
    db: &Database,
    cache: &EdgeCache,
) -> Result<(u64, u64), HarnessError> {
    let mut up_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, STREAM_UPDATES));
    let mut rd_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, STREAM_READS));
    let mut up_times = arrivals(cfg.rates.update_tps, cfg.duration_ms).peekable();
    let mut rd_times = arrivals(cfg.rates.read_tps, cfg.duration_ms).peekable();
    let (mut n_up, mut n_rd) = (0u64, 0u64);
    let mut next_id = 1u64;
    loop {
        let tu = up_times.peek().copied();
        let tr = rd_times.peek().copied();
        let Some(t) = tu.into_iter().chain(tr).min() else {
            break;
        };
        for inv in db.drain_channel(t) {
            cache.handle_invalidation(inv);
        }
        if tu == Some(t) {
            up_times.next();
            let req = workload.request(TxnKind::Update, t, &mut up_rng);
            run_update(db, TxnId(next_id), &req.keys, t)?;
            next_id += 1;
            n_up += 1;
        }
        if tr == Some(t) {
            rd_times.next();
            let req = workload.request(TxnKind::ReadOnly, t, &mut rd_rng);
            run_read_only(cache, TxnId(next_id), &req.keys, t)?;
            next_id += 1;
            n_rd += 1;
        }
    }
    Ok((n_up, n_rd))
}

/// Free-running mode: one update client, several read clients and an
/// invalidation pump on their own threads. Each client follows its own
/// arrival schedule; the pump delivers messages up to the slowest
/// client's progress.
fn run_concurrent(
    cfg: &ExperimentConfig,
    workload: &Workload,
    db: &Database,
    cache: &EdgeCache,
) -> Result<(u64, u64), HarnessError> {
    let readers = cfg.concurrent_readers;
    let progress: Vec<AtomicU64> = (0..=readers).map(|_| AtomicU64::new(0)).collect();
    let finished = AtomicBool::new(false);
    let ids = AtomicU64::new(1);
    let duration = cfg.duration_ms;

    std::thread::scope(|s| -> Result<(u64, u64), HarnessError> {
        let pump = s.spawn(|| {
            while !finished.load(Ordering::Acquire) {
                let now = progress.iter().map(|p| p.load(Ordering::Acquire)).min().unwrap_or(0);
                for inv in db.drain_channel(now) {
                    cache.handle_invalidation(inv);
                }
                std::thread::yield_now();
            }
        });

        let updater = s.spawn(|| -> Result<u64, HarnessError> {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, STREAM_UPDATES));
            let mut n = 0;
            for t in arrivals(cfg.rates.update_tps, duration) {
                let req = workload.request(TxnKind::Update, t, &mut rng);
                run_update(db, TxnId(ids.fetch_add(1, Ordering::Relaxed)), &req.keys, t)?;
                progress[0].store(t, Ordering::Release);
                n += 1;
            }
            progress[0].store(duration, Ordering::Release);
            Ok(n)
        });

        let read_clients: Vec<_> = (0..readers)
            .map(|c| {
                let progress = &progress;
                let ids = &ids;
                s.spawn(move || -> Result<u64, HarnessError> {
                    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
                        cfg.seed,
                        STREAM_READS + 16 * (c as u64 + 1),
                    ));
                    let mut n = 0;
                    let times = arrivals(cfg.rates.read_tps, duration)
                        .enumerate()
                        .filter(|(i, _)| i % readers == c)
                        .map(|(_, t)| t);
                    for t in times {
                        let req = workload.request(TxnKind::ReadOnly, t, &mut rng);
                        let id = TxnId(ids.fetch_add(1, Ordering::Relaxed));
                        run_read_only(cache, id, &req.keys, t)?;
                        progress[c + 1].store(t, Ordering::Release);
                        n += 1;
                    }
                    progress[c + 1].store(duration, Ordering::Release);
                    Ok(n)
                })
            })
            .collect();

        let n_up = updater.join().expect("update client panicked");
        let mut n_rd = 0;
        let mut err = None;
        for h in read_clients {
            match h.join().expect("read client panicked") {
                Ok(n) => n_rd += n,
                Err(e) => err = err.or(Some(e)),
            }
        }
        finished.store(true, Ordering::Release);
        pump.join().expect("pump panicked");
        let n_up = n_up?;
        match err {
            Some(e) => Err(e),
            None => Ok((n_up, n_rd)),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::CacheKind;
    use crate::model::DepBound;
    use crate::workload::synthetic::AccessMode;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk_default();
        cfg.duration_ms = 5_000;
        cfg
    }

    #[test]
    fn arrival_counts_are_exact() {
        assert_eq!(arrivals(100.0, 60_000).count(), 6000);
        assert_eq!(arrivals(500.0, 60_000).count(), 30_000);
        assert_eq!(arrivals(0.0, 60_000).count(), 0);
        assert_eq!(arrivals(3.0, 1000).collect::<Vec<_>>(), vec![0, 333, 666]);
    }

    #[test]
    fn issues_configured_counts() {
        let r = run_experiment(&small()).unwrap();
        assert_eq!(r.updates_issued, 500);
        assert_eq!(r.reads_issued, 2500);
        assert_eq!(r.report.read_only_total(), 2500);
        assert_eq!(r.report.update_commits, 500);
        assert_eq!(r.db.commits, 500);
    }

    #[test]
    fn no_reads_no_read_only_txns() {
        let mut cfg = small();
        cfg.rates.read_tps = 0.0;
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.report.read_only_total(), 0);
        assert_eq!(r.cache.misses + r.cache.hits, 0);
    }

    #[test]
    fn deterministic_runs_repeat_exactly() {
        let cfg = small();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );
    }

    #[test]
    fn lossless_perfect_clusters_unbounded_is_clean() {
        let mut cfg = small();
        cfg.channel.drop_prob = 0.0;
        cfg.cache.dependency_bound = DepBound::Unbounded;
        if let WorkloadSpec::Synthetic(s) = &mut cfg.workload {
            s.mode = AccessMode::Perfect;
        }
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.report.committed_inconsistent, 0);
    }

    #[test]
    fn concurrent_mode_completes() {
        let mut cfg = small();
        cfg.exec = ExecMode::Concurrent;
        cfg.cache.mode = CacheKind::Tcache;
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.updates_issued, 500);
        assert_eq!(r.reads_issued, 2500);
        assert_eq!(r.report.read_only_total(), 2500);
    }

    #[test]
    fn graph_workload_runs() {
        let cfg = small().with_overrides(&["workload=amazon-like"]).unwrap();
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.report.read_only_total(), 2500);
        assert!(r.cache.hit_ratio > 0.0);
    }
}
