//! Report files: per-bucket CSV, gnuplot columns, JSON summary and the
//! config echo.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::{HarnessError, RunResult};
use super::CODE_VERSION;

/// One line of a preset's combined table. Percentages are of all
/// read-only transactions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_value: String,
    pub consistent_pct: f64,
    pub inconsistent_pct: f64,
    pub abort_pct: f64,
    pub hit_ratio: f64,
    pub db_reads_per_s: f64,
}

impl SweepRow {
    pub fn from_run(sweep_value: impl Into<String>, r: &RunResult) -> Self {
        Self {
            sweep_value: sweep_value.into(),
            consistent_pct: 100.0 * r.report.consistent_fraction(),
            inconsistent_pct: 100.0 * r.report.uncommittable_fraction(),
            abort_pct: 100.0 * r.report.abort_fraction(),
            hit_ratio: r.cache.hit_ratio,
            db_reads_per_s: r.db_reads_per_s,
        }
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

pub const SWEEP_HEADER: [&str; 6] = [
    "sweep_value",
    "consistent%",
    "inconsistent%",
    "abort%",
    "hit_ratio",
    "db_reads_per_s",
];

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.sweep_value.clone(),
            fmt(r.consistent_pct),
            fmt(r.inconsistent_pct),
            fmt(r.abort_pct),
            fmt(r.hit_ratio),
            fmt(r.db_reads_per_s),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("csv is utf-8"))
}

pub fn timeseries_csv(r: &RunResult) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t_start_s", "total", "consistent%", "inconsistent%", "abort%"])?;
    for b in &r.report.series {
        w.write_record([
            fmt(b.t_start as f64 / 1000.0),
            b.total.to_string(),
            fmt(b.consistent_pct),
            fmt(b.inconsistent_pct),
            fmt(b.abort_pct),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("csv is utf-8"))
}

fn commented_config(r: &RunResult) -> Result<String, HarnessError> {
    let mut out = format!("# {CODE_VERSION}\n");
    for line in r.config.to_toml()?.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    Ok(out)
}

/// Whitespace-separated columns for gnuplot's stacked-band plots, with
/// the config echoed as comments.
pub fn timeseries_dat(r: &RunResult) -> Result<String, HarnessError> {
    let mut out = commented_config(r)?;
    out.push_str("# t_s consistent inconsistent abort total\n");
    for b in &r.report.series {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            fmt(b.t_start as f64 / 1000.0),
            fmt(b.consistent_pct),
            fmt(b.inconsistent_pct),
            fmt(b.abort_pct),
            b.total
        ));
    }
    Ok(out)
}

pub fn sweep_dat(name: &str, rows: &[SweepRow], configs: &[&RunResult]) -> Result<String, HarnessError> {
    let mut out = format!("# preset {name}\n");
    if let Some(first) = configs.first() {
        out.push_str(&commented_config(first)?);
    }
    out.push_str("# sweep_value consistent inconsistent abort hit_ratio db_reads_per_s\n");
    for r in rows {
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            r.sweep_value,
            fmt(r.consistent_pct),
            fmt(r.inconsistent_pct),
            fmt(r.abort_pct),
            fmt(r.hit_ratio),
            fmt(r.db_reads_per_s)
        ));
    }
    Ok(out)
}

#[derive(Serialize)]
struct Summary<'a> {
    code_version: &'a str,
    config: &'a super::config::ExperimentConfig,
    updates_issued: u64,
    reads_issued: u64,
    committed_consistent: u64,
    committed_inconsistent: u64,
    aborted_would_be_consistent: u64,
    aborted_would_be_inconsistent: u64,
    update_commits: u64,
    inconsistency_ratio: f64,
    uncommittable_fraction: f64,
    abort_fraction: f64,
    detection_ratio: f64,
    db_reads_per_s: f64,
    cache: &'a crate::cache::CacheStats,
    db: &'a crate::db::DbStats,
}

pub fn summary_json(r: &RunResult) -> Result<String, HarnessError> {
    let s = Summary {
        code_version: CODE_VERSION,
        config: &r.config,
        updates_issued: r.updates_issued,
        reads_issued: r.reads_issued,
        committed_consistent: r.report.committed_consistent,
        committed_inconsistent: r.report.committed_inconsistent,
        aborted_would_be_consistent: r.report.aborted_would_be_consistent,
        aborted_would_be_inconsistent: r.report.aborted_would_be_inconsistent,
        update_commits: r.report.update_commits,
        inconsistency_ratio: r.report.inconsistency_ratio(),
        uncommittable_fraction: r.report.uncommittable_fraction(),
        abort_fraction: r.report.abort_fraction(),
        detection_ratio: r.report.detection_ratio(),
        db_reads_per_s: r.db_reads_per_s,
        cache: &r.cache,
        db: &r.db,
    };
    let mut text = serde_json::to_string_pretty(&s)?;
    text.push('\n');
    Ok(text)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| HarnessError::Io {
            path: parent.into(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.into(),
        source,
    })
}

/// Writes config.toml, summary.json, timeseries.csv and timeseries.dat
/// into `dir`, plus relabel.csv for graph workloads.
pub fn write_run(dir: &Path, r: &RunResult) -> Result<(), HarnessError> {
    write_file(
        &dir.join("config.toml"),
        &format!("# {CODE_VERSION}\n{}", r.config.to_toml()?),
    )?;
    write_file(&dir.join("summary.json"), &summary_json(r)?)?;
    write_file(&dir.join("timeseries.csv"), &timeseries_csv(r)?)?;
    write_file(&dir.join("timeseries.dat"), &timeseries_dat(r)?)?;
    if let super::run::Workload::Graph { graph, .. } = super::run::Workload::build(&r.config)? {
        let mut buf = Vec::new();
        graph.write_relabel_csv(&mut buf)?;
        write_file(&dir.join("relabel.csv"), &String::from_utf8(buf).expect("csv is utf-8"))?;
    }
    Ok(())
}
