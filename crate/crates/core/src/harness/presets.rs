//! Named parameter sweeps, one per figure axis.

use std::path::Path;

use crate::cache::Strategy;
use crate::model::DepBound;
use crate::workload::graph::GraphSpec;
use crate::workload::synthetic::{AccessMode, Drift, Formation, SyntheticSpec};

use super::config::{CacheKind, ExperimentConfig, WorkloadSpec};
use super::output::{self, SweepRow};
use super::run::{run_experiment, HarnessError, RunResult};

pub const PRESET_NAMES: &[&str] = &[
    "alpha-sweep",
    "unclustered",
    "convergence",
    "drift",
    "strategy",
    "dep-sweep",
    "ttl-sweep",
];

pub const ALPHAS: [f64; 8] = [
    1.0 / 32.0,
    1.0 / 16.0,
    1.0 / 8.0,
    1.0 / 4.0,
    1.0 / 2.0,
    1.0,
    2.0,
    4.0,
];

/// TTL points of the TTL sweep, in ticks; `None` never expires.
pub const TTLS: [Option<u64>; 10] = [
    None,
    Some(20_000),
    Some(10_000),
    Some(5_000),
    Some(2_000),
    Some(1_000),
    Some(500),
    Some(200),
    Some(100),
    Some(50),
];

#[derive(Clone, Debug)]
pub struct Preset {
    pub name: String,
    pub axis: &'static str,
    pub points: Vec<(String, ExperimentConfig)>,
    /// Whether the per-bucket series is the figure of interest.
    pub timeseries: bool,
}

fn synthetic(cfg: &mut ExperimentConfig) -> &mut SyntheticSpec {
    if !matches!(cfg.workload, WorkloadSpec::Synthetic(_)) {
        cfg.workload = WorkloadSpec::Synthetic(SyntheticSpec::new(2000, 5, AccessMode::Pareto { alpha: 1.0 }));
    }
    match &mut cfg.workload {
        WorkloadSpec::Synthetic(s) => s,
        WorkloadSpec::Graph(_) => unreachable!(),
    }
}

fn ensure_graph(cfg: &mut ExperimentConfig) {
    if !matches!(cfg.workload, WorkloadSpec::Graph(_)) {
        cfg.workload = WorkloadSpec::Graph(GraphSpec::amazon_like());
    }
}

fn with(base: &ExperimentConfig, f: impl FnOnce(&mut ExperimentConfig)) -> ExperimentConfig {
    let mut c = base.clone();
    f(&mut c);
    c
}

/// Base config of a preset before overrides.
fn preset_base(name: &str) -> Result<ExperimentConfig, HarnessError> {
    let mut b = ExperimentConfig::desk_default();
    b.name = name.into();
    match name {
        "alpha-sweep" | "strategy" => {}
        "unclustered" => synthetic(&mut b).mode = AccessMode::Uniform,
        "convergence" => {
            b.duration_ms = 120_000;
            let s = synthetic(&mut b);
            s.universe = 1000;
            s.mode = AccessMode::Perfect;
            s.formation = Some(Formation {
                switch_time: 58_000,
                before: AccessMode::Uniform,
                after: AccessMode::Perfect,
            });
        }
        "drift" => {
            b.duration_ms = 180_000;
            b.time_compression = 6.0;
            let s = synthetic(&mut b);
            s.mode = AccessMode::Perfect;
            s.drift = Some(Drift {
                period: 180_000,
                shift: 1,
            });
        }
        "dep-sweep" | "ttl-sweep" => {
            ensure_graph(&mut b);
            b.cache.dependency_bound = DepBound::Finite(3);
        }
        other => return Err(HarnessError::UnknownPreset(other.into())),
    }
    Ok(b)
}

/// Expands a preset. Overrides apply to the base config; the swept
/// parameter is then set per point.
pub fn preset<S: AsRef<str>>(name: &str, overrides: &[S]) -> Result<Preset, HarnessError> {
    let base = preset_base(name)?.with_overrides(overrides)?;
    let (axis, timeseries, points): (&'static str, bool, Vec<(String, ExperimentConfig)>) = match name {
        "alpha-sweep" => (
            "alpha",
            false,
            ALPHAS
                .iter()
                .map(|&a| {
                    let c = with(&base, |c| synthetic(c).mode = AccessMode::Pareto { alpha: a });
                    (format!("{a}"), c)
                })
                .collect(),
        ),
        "unclustered" => ("workload", false, vec![("uniform".into(), base.clone())]),
        "convergence" => ("time", true, vec![("formation".into(), base.clone())]),
        "drift" => ("time", true, vec![("drift".into(), base.clone())]),
        "strategy" => (
            "strategy",
            false,
            [Strategy::Abort, Strategy::Evict, Strategy::Retry]
                .into_iter()
                .map(|s| {
                    let c = with(&base, |c| {
                        c.cache.mode = CacheKind::Tcache;
                        c.cache.strategy = s;
                    });
                    (s.to_string(), c)
                })
                .collect(),
        ),
        "dep-sweep" => {
            let mut pts = vec![(
                "unaware".to_string(),
                with(&base, |c| c.cache.mode = CacheKind::Unaware),
            )];
            for k in 0..=5 {
                pts.push((
                    k.to_string(),
                    with(&base, |c| {
                        c.cache.mode = CacheKind::Tcache;
                        c.cache.dependency_bound = DepBound::Finite(k);
                    }),
                ));
            }
            ("dependency_bound", false, pts)
        }
        "ttl-sweep" => {
            let mut pts = vec![(
                "tcache".to_string(),
                with(&base, |c| c.cache.mode = CacheKind::Tcache),
            )];
            for ttl in TTLS {
                pts.push((
                    ttl.map_or("inf".to_string(), |t| t.to_string()),
                    with(&base, |c| {
                        c.cache.mode = CacheKind::Ttl;
                        c.cache.ttl_ms = ttl;
                    }),
                ));
            }
            ("ttl_ms", false, pts)
        }
        other => return Err(HarnessError::UnknownPreset(other.into())),
    };
    Ok(Preset {
        name: name.into(),
        axis,
        points,
        timeseries,
    })
}

#[derive(Clone, Debug)]
pub struct PresetResult {
    pub name: String,
    pub axis: &'static str,
    pub rows: Vec<SweepRow>,
    pub runs: Vec<RunResult>,
    /// The combined table as written to `<name>.csv`.
    pub csv: String,
}

impl PresetResult {
    pub fn run(&self, sweep_value: &str) -> Option<&RunResult> {
        self.rows
            .iter()
            .position(|r| r.sweep_value == sweep_value)
            .map(|i| &self.runs[i])
    }
}

/// Runs every point of a preset. With `out_dir`, writes `<name>.csv`,
/// `<name>.dat` and one sub-directory of run files per point.
pub fn run_preset<S: AsRef<str>>(
    name: &str,
    overrides: &[S],
    out_dir: Option<&Path>,
) -> Result<PresetResult, HarnessError> {
    let p = preset(name, overrides)?;
    let mut rows = Vec::with_capacity(p.points.len());
    let mut runs = Vec::with_capacity(p.points.len());
    for (value, cfg) in &p.points {
        let r = run_experiment(cfg)?;
        rows.push(SweepRow::from_run(value.clone(), &r));
        runs.push(r);
    }
    let csv = output::sweep_csv(&rows)?;
    if let Some(dir) = out_dir {
        output::write_file(&dir.join(format!("{name}.csv")), &csv)?;
        let refs: Vec<&RunResult> = runs.iter().collect();
        output::write_file(
            &dir.join(format!("{name}.dat")),
            &output::sweep_dat(name, &rows, &refs)?,
        )?;
        for (row, r) in rows.iter().zip(&runs) {
            output::write_run(&dir.join(format!("{name}-{}", row.sweep_value)), r)?;
        }
    }
    Ok(PresetResult {
        name: p.name,
        axis: p.axis,
        rows,
        runs,
        csv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_expands() {
        for name in PRESET_NAMES {
            let p = preset::<&str>(name, &[]).unwrap();
            assert!(!p.points.is_empty(), "{name}");
            for (_, c) in &p.points {
                c.validate().unwrap();
            }
        }
        assert!(matches!(
            preset::<&str>("nope", &[]),
            Err(HarnessError::UnknownPreset(_))
        ));
    }

    #[test]
    fn overrides_reach_every_point() {
        let p = preset("strategy", &["workload=amazon-like", "cache.dependency_bound=3"]).unwrap();
        assert_eq!(p.points.len(), 3);
        for (_, c) in &p.points {
            assert!(matches!(c.workload, WorkloadSpec::Graph(_)));
            assert_eq!(c.cache.dependency_bound, DepBound::Finite(3));
        }
        let names: Vec<_> = p.points.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["ABORT", "EVICT", "RETRY"]);
    }

    #[test]
    fn short_preset_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_preset("strategy", &["duration_ms=2000"], Some(dir.path())).unwrap();
        assert_eq!(r.rows.len(), 3);
        let csv = std::fs::read_to_string(dir.path().join("strategy.csv")).unwrap();
        assert_eq!(csv, r.csv);
        assert!(csv.starts_with("sweep_value,consistent%,inconsistent%,abort%,hit_ratio,db_reads_per_s\n"));
        assert!(dir.path().join("strategy-ABORT/summary.json").exists());
        assert!(dir.path().join("strategy-EVICT/timeseries.csv").exists());
        let summary = std::fs::read_to_string(dir.path().join("strategy-RETRY/summary.json")).unwrap();
        assert!(summary.contains("\"code_version\""));
        assert!(summary.contains("\"strategy\": \"retry\""));
    }
}
