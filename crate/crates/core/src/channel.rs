//! Best-effort invalidation pipeline from the database to the cache.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::history::Tick;
use crate::model::{ObjectId, Version};

/// Announces that `key` was rewritten at `ver`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invalidation {
    pub key: ObjectId,
    pub ver: Version,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// Probability that a message is silently lost.
    pub drop_prob: f64,
    /// Delivery delay, uniform in `[min_delay, max_delay]` ticks.
    pub min_delay: Tick,
    pub max_delay: Tick,
    /// Deliver in delivery-time order instead of enqueue order.
    #[serde(default)]
    pub allow_reorder: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            drop_prob: 0.2,
            min_delay: 1,
            max_delay: 10,
            allow_reorder: false,
        }
    }
}

impl ChannelConfig {
    pub fn lossless() -> Self {
        Self {
            drop_prob: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub enqueued: u64,
    pub dropped: u64,
    pub delivered: u64,
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    due: Tick,
    seq: u64,
    msg: Invalidation,
}

/// FIFO channel that drops each message independently with `drop_prob`
/// and holds survivors for a random delay.
///
/// Without reordering, a message is never delivered before an earlier
/// enqueued one, so a short-delayed message can wait behind a longer one.
#[derive(Debug)]
pub struct LossyChannel {
    cfg: ChannelConfig,
    queue: VecDeque<InFlight>,
    rng: ChaCha8Rng,
    seq: u64,
    stats: ChannelStats,
}

impl LossyChannel {
    pub fn new(cfg: ChannelConfig, seed: u64) -> Self {
        Self {
            cfg,
            queue: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            seq: 0,
            stats: ChannelStats::default(),
        }
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    pub fn enqueue(&mut self, msg: Invalidation, now: Tick) {
        self.stats.enqueued += 1;
        if self.cfg.drop_prob > 0.0 && self.rng.gen_bool(self.cfg.drop_prob.min(1.0)) {
            self.stats.dropped += 1;
            return;
        }
        let (lo, hi) = (self.cfg.min_delay, self.cfg.max_delay.max(self.cfg.min_delay));
        let mut due = now + self.rng.gen_range(lo..=hi);
        if !self.cfg.allow_reorder {
            if let Some(last) = self.queue.back() {
                due = due.max(last.due);
            }
        }
        let entry = InFlight {
            due,
            seq: self.seq,
            msg,
        };
        self.seq += 1;
        if self.cfg.allow_reorder {
            let at = self
                .queue
                .partition_point(|m| (m.due, m.seq) <= (entry.due, entry.seq));
            self.queue.insert(at, entry);
        } else {
            self.queue.push_back(entry);
        }
    }

    /// Earliest pending delivery time.
    pub fn next_due(&self) -> Option<Tick> {
        self.queue.front().map(|m| m.due)
    }

    /// Messages due at or before `now`, in delivery order.
    pub fn drain(&mut self, now: Tick) -> Vec<Invalidation> {
        let mut out = Vec::new();
        while let Some(front) = self.queue.front() {
            if front.due > now {
                break;
            }
            out.push(self.queue.pop_front().unwrap().msg);
        }
        self.stats.delivered += out.len() as u64;
        out
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn stats(&self) -> ChannelStats {
        self.stats
    }
}
