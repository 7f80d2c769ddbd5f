//! Experiment configuration, read from and written to TOML.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{CacheMode, Strategy};
use crate::channel::ChannelConfig;
use crate::history::Tick;
use crate::model::DepBound;
use crate::monitor::MonitorConfig;
use crate::workload::graph::GraphSpec;
use crate::workload::synthetic::{AccessMode, SyntheticSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("override {0:?} is not of the form key=value")]
    BadOverride(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn field(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    /// Single-threaded discrete-event loop on the logical clock.
    #[default]
    Deterministic,
    /// Independent client threads; results are statistical only.
    Concurrent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheKind {
    Tcache,
    Ttl,
    Unaware,
}

fn default_strategy() -> Strategy {
    Strategy::Abort
}

fn default_bound() -> DepBound {
    DepBound::Finite(5)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheSection {
    pub mode: CacheKind,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    /// Entry lifetime in ticks for `mode = "ttl"`; absent means forever.
    #[serde(default)]
    pub ttl_ms: Option<Tick>,
    #[serde(default = "default_bound")]
    pub dependency_bound: DepBound,
}

impl CacheSection {
    pub fn cache_mode(&self) -> CacheMode {
        match self.mode {
            CacheKind::Tcache => CacheMode::TCache(self.strategy),
            CacheKind::Ttl => CacheMode::Ttl(self.ttl_ms),
            CacheKind::Unaware => CacheMode::Unaware,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    pub update_tps: f64,
    pub read_tps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WorkloadSpec {
    Synthetic(SyntheticSpec),
    Graph(GraphSpec),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

fn default_compression() -> f64 {
    1.0
}

fn default_bucket() -> Tick {
    1000
}

fn default_readers() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub exec: ExecMode,
    /// Simulated run length in ticks (1 tick = 1 ms).
    pub duration_ms: Tick,
    /// Divides drift periods and formation switch times.
    #[serde(default = "default_compression")]
    pub time_compression: f64,
    /// Transactions completing before this tick are left out of totals.
    #[serde(default)]
    pub warmup_ms: Tick,
    #[serde(default = "default_bucket")]
    pub report_bucket_ms: Tick,
    /// Read-only client threads in concurrent mode.
    #[serde(default = "default_readers")]
    pub concurrent_readers: usize,
    pub cache: CacheSection,
    #[serde(default)]
    pub channel: ChannelConfig,
    pub rates: Rates,
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 2000 objects in clusters of 5 read with a
    /// bounded Pareto of shape 1, 100 updates and 500 reads per second for
    /// 60 simulated seconds, dependency lists of 5, ABORT.
    pub fn desk_default() -> Self {
        Self {
            name: String::new(),
            seed: 1,
            exec: ExecMode::Deterministic,
            duration_ms: 60_000,
            time_compression: 1.0,
            warmup_ms: 0,
            report_bucket_ms: 1000,
            concurrent_readers: default_readers(),
            cache: CacheSection {
                mode: CacheKind::Tcache,
                strategy: Strategy::Abort,
                ttl_ms: None,
                dependency_bound: DepBound::Finite(5),
            },
            channel: ChannelConfig::default(),
            rates: Rates {
                update_tps: 100.0,
                read_tps: 500.0,
            },
            workload: WorkloadSpec::Synthetic(SyntheticSpec::new(
                2000,
                5,
                AccessMode::Pareto { alpha: 1.0 },
            )),
            monitor: MonitorConfig::default(),
            output: OutputSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let path = path.into();
        let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// Object count implied by the workload.
    pub fn universe(&self) -> usize {
        match &self.workload {
            WorkloadSpec::Synthetic(s) => s.universe,
            WorkloadSpec::Graph(g) => g.target_nodes,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.duration_ms == 0 {
            return Err(field("duration_ms", "must be positive"));
        }
        if !(self.time_compression > 0.0 && self.time_compression.is_finite()) {
            return Err(field("time_compression", "must be a positive number"));
        }
        if self.report_bucket_ms == 0 {
            return Err(field("report_bucket_ms", "must be positive"));
        }
        if self.concurrent_readers == 0 {
            return Err(field("concurrent_readers", "must be at least 1"));
        }
        for (name, r) in [
            ("rates.update_tps", self.rates.update_tps),
            ("rates.read_tps", self.rates.read_tps),
        ] {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(field(name, format!("must be a finite rate >= 0, got {r}")));
            }
        }
        let ch = &self.channel;
        if !(0.0..=1.0).contains(&ch.drop_prob) {
            return Err(field("channel.drop_prob", format!("must be in [0, 1], got {}", ch.drop_prob)));
        }
        if ch.min_delay > ch.max_delay {
            return Err(field(
                "channel.min_delay",
                format!("{} exceeds max_delay {}", ch.min_delay, ch.max_delay),
            ));
        }
        if self.cache.mode != CacheKind::Ttl && self.cache.ttl_ms.is_some() {
            return Err(field("cache.ttl_ms", "only meaningful with mode = \"ttl\""));
        }
        match &self.workload {
            WorkloadSpec::Synthetic(s) => s
                .validate()
                .map_err(|e| field("workload", e.to_string()))?,
            WorkloadSpec::Graph(g) => g
                .validate()
                .map_err(|e| field("workload", e.to_string()))?,
        }
        Ok(())
    }

    /// Applies `key=value` overrides with dotted keys. Values are parsed as
    /// TOML and fall back to plain strings. `workload=amazon-like` swaps in
    /// the shipped graph workload.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, ConfigError> {
        let mut root = toml::Value::try_from(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| ConfigError::BadOverride(o.into()))?;
            let key = key.trim();
            let raw = raw.trim();
            if key.is_empty() {
                return Err(ConfigError::BadOverride(o.into()));
            }
            let value = if key == "workload" && raw == "amazon-like" {
                toml::Value::try_from(WorkloadSpec::Graph(GraphSpec::amazon_like()))?
            } else {
                parse_value(raw)
            };
            set_path(&mut root, key, value).map_err(|m| field(key, m))?;
        }
        let cfg: Self = root.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_path(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<(), String> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| format!("{} is not a table", parts[..i].join(".")))?;
        if i + 1 == parts.len() {
            table.insert((*p).into(), value);
            return Ok(());
        }
        cur = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    unreachable!("split yields at least one part")
}
