//! Synthetic cluster workloads.
//!
//! Objects `0..N` are split into aligned clusters of `c` consecutive ids.
//! A transaction picks one cluster uniformly and draws its keys from it:
//! uniformly in perfect mode, or from a bounded Pareto offset measured from
//! the cluster head in Pareto mode. Drift slides every cluster boundary by
//! a fixed amount per period; formation switches the access mode at a
//! given time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::history::Tick;
use crate::model::ObjectId;

use super::WorkloadError;

/// Pareto law with shape `alpha` truncated to `[low, high]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundedPareto {
    alpha: f64,
    low: f64,
    high: f64,
    // 1 − (low/high)^alpha
    mass: f64,
}

impl BoundedPareto {
    pub fn new(alpha: f64, low: f64, high: f64) -> Result<Self, WorkloadError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(WorkloadError::Invalid(format!("pareto alpha must be > 0, got {alpha}")));
        }
        if !(low > 0.0 && high > low) {
            return Err(WorkloadError::Invalid(format!(
                "pareto support must satisfy 0 < low < high, got [{low}, {high}]"
            )));
        }
        Ok(Self {
            alpha,
            low,
            high,
            mass: 1.0 - (low / high).powf(alpha),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `F(x) = (1 − (L/x)^α) / (1 − (L/H)^α)` on `[L, H]`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.low {
            0.0
        } else if x >= self.high {
            1.0
        } else {
            (1.0 - (self.low / x).powf(self.alpha)) / self.mass
        }
    }

    /// Inverse-CDF sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let x = self.low / (1.0 - u * self.mass).powf(1.0 / self.alpha);
        x.clamp(self.low, self.high)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AccessMode {
    /// Keys drawn uniformly with repetition from one cluster.
    Perfect,
    /// Keys at bounded-Pareto offsets from the head of one cluster.
    Pareto { alpha: f64 },
    /// Keys drawn uniformly from the whole universe.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Drift {
    /// Ticks between shifts, before time compression.
    pub period: Tick,
    pub shift: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Formation {
    /// Switch time in ticks, before time compression.
    pub switch_time: Tick,
    pub before: AccessMode,
    pub after: AccessMode,
}

fn default_accesses() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub universe: usize,
    pub cluster_size: usize,
    #[serde(default = "default_accesses")]
    pub accesses: usize,
    pub mode: AccessMode,
    #[serde(default)]
    pub drift: Option<Drift>,
    #[serde(default)]
    pub formation: Option<Formation>,
}

impl SyntheticSpec {
    pub fn new(universe: usize, cluster_size: usize, mode: AccessMode) -> Self {
        Self {
            universe,
            cluster_size,
            accesses: default_accesses(),
            mode,
            drift: None,
            formation: None,
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: String| Err(WorkloadError::Invalid(m));
        if self.universe == 0 || self.universe > u32::MAX as usize {
            return bad(format!("universe must be in 1..=2^32-1, got {}", self.universe));
        }
        if self.cluster_size == 0 || self.cluster_size > self.universe {
            return bad(format!(
                "cluster_size must be in 1..={}, got {}",
                self.universe, self.cluster_size
            ));
        }
        if self.accesses == 0 {
            return bad("accesses must be at least 1".into());
        }
        if let Some(d) = self.drift {
            if d.period == 0 {
                return bad("drift period must be positive".into());
            }
        }
        let modes = [Some(self.mode), self.formation.map(|f| f.before), self.formation.map(|f| f.after)];
        for m in modes.into_iter().flatten() {
            if let AccessMode::Pareto { alpha } = m {
                BoundedPareto::new(alpha, 1.0, self.universe as f64)?;
            }
        }
        Ok(())
    }

    pub fn cluster_count(&self) -> usize {
        self.universe.div_ceil(self.cluster_size)
    }

    /// Access mode in force at `now`.
    pub fn mode_at(&self, now: Tick) -> AccessMode {
        match self.formation {
            Some(f) if now < f.switch_time => f.before,
            Some(f) => f.after,
            None => self.mode,
        }
    }

    /// How far cluster boundaries have slid by `now`.
    pub fn apply_drift(&self, now: Tick) -> u32 {
        match self.drift {
            Some(d) => {
                let shifts = now / d.period;
                ((shifts as u128 * d.shift as u128) % self.universe as u128) as u32
            }
            None => 0,
        }
    }

    /// Keys of cluster `i` at drift offset `offset`, wrapping past `N − 1`.
    pub fn cluster_keys(&self, i: usize, offset: u32) -> Vec<ObjectId> {
        let n = self.universe;
        let start = i * self.cluster_size;
        let end = (start + self.cluster_size).min(n);
        (start..end)
            .map(|k| ObjectId(((k + offset as usize) % n) as u32))
            .collect()
    }

    /// One transaction's key sequence, with repetitions.
    pub fn gen_txn<R: Rng + ?Sized>(&self, now: Tick, rng: &mut R) -> Vec<ObjectId> {
        let n = self.universe;
        let offset = self.apply_drift(now) as usize;
        match self.mode_at(now) {
            AccessMode::Uniform => (0..self.accesses)
                .map(|_| ObjectId(rng.gen_range(0..n) as u32))
                .collect(),
            AccessMode::Perfect => {
                let i = rng.gen_range(0..self.cluster_count());
                let start = i * self.cluster_size;
                let len = self.cluster_size.min(n - start);
                (0..self.accesses)
                    .map(|_| ObjectId(((start + rng.gen_range(0..len) + offset) % n) as u32))
                    .collect()
            }
            AccessMode::Pareto { alpha } => {
                let pareto = BoundedPareto::new(alpha, 1.0, n as f64)
                    .expect("validated before generation");
                let head = rng.gen_range(0..self.cluster_count()) * self.cluster_size + offset;
                (0..self.accesses)
                    .map(|_| {
                        let step = (pareto.sample(rng).floor() as usize).saturating_sub(1);
                        ObjectId(((head + step) % n) as u32)
                    })
                    .collect()
            }
        }
    }
}
