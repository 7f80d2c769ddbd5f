//! Transaction streams: synthetic clusters and random walks on graphs.

pub mod graph;
pub mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::Tick;
use crate::model::ObjectId;

pub use crate::history::TxnKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("invalid workload: {0}")]
    Invalid(String),
}

/// One generated transaction. Keys may repeat.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxnRequest {
    pub kind: TxnKind,
    pub keys: Vec<ObjectId>,
    pub issue_time: Tick,
}
