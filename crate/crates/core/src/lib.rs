//! Transactional edge cache over an incoherent, invalidation-fed cache.
//!
//! The database attaches bounded dependency lists to every object version.
//! The edge cache checks each read of a read-only transaction against the
//! lists gathered so far and aborts, evicts or reads through when it sees
//! two versions that cannot belong to one serial order. A monitor outside
//! the data path classifies every read-only transaction so the cache's
//! behaviour can be measured.

pub mod cache;
pub mod channel;
pub mod db;
pub mod harness;
pub mod history;
pub mod model;
pub mod monitor;
pub mod workload;

pub use cache::{CacheMode, CacheStats, EdgeCache, Strategy};
pub use channel::{ChannelConfig, Invalidation, LossyChannel};
pub use db::{Database, DbConfig, DbStats};
pub use history::{HistoryEvent, HistorySink, Tick, TxnId};
pub use model::{DepBound, ObjectId, Version};
pub use monitor::{Monitor, MonitorConfig, MonitorReport, MonitorSink};
