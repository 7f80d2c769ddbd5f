//! Exhaustive serializability oracle for tiny histories.
//!
//! Searches for a total order of all committed updates plus the candidate
//! read-only transactions in which every read returns the latest preceding
//! write of its key and writes of each key happen in version order. It
//! shares no code with the serialization graph and serves as the reference
//! the graph test is checked against.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::history::{HistoryEvent, TxnKind, TxnStatus};
use crate::model::{ObjectId, Version};

pub const MAX_ORACLE_TXNS: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("oracle limited to {max} transactions, got {got}")]
    TooLarge { got: usize, max: usize },
}

struct Txn<'a> {
    reads: &'a [(ObjectId, Version)],
    writes: &'a [(ObjectId, Version)],
}

struct Search<'a> {
    txns: Vec<Txn<'a>>,
    current: HashMap<ObjectId, Version>,
    dead: HashSet<u32>,
}

impl Search<'_> {
    fn can_place(&self, t: &Txn<'_>) -> bool {
        let cur = |k: &ObjectId| self.current.get(k).copied().unwrap_or(Version::INITIAL);
        t.reads.iter().all(|(k, v)| cur(k) == *v) && t.writes.iter().all(|(k, v)| cur(k) < *v)
    }

    fn run(&mut self, placed: u32) -> bool {
        let n = self.txns.len();
        if placed.count_ones() as usize == n {
            return true;
        }
        if self.dead.contains(&placed) {
            return false;
        }
        for i in 0..n {
            if placed & (1 << i) != 0 || !self.can_place(&self.txns[i]) {
                continue;
            }
            let saved: Vec<(ObjectId, Option<Version>)> = self.txns[i]
                .writes
                .iter()
                .map(|&(k, v)| (k, self.current.insert(k, v)))
                .collect();
            let ok = self.run(placed | (1 << i));
            for (k, old) in saved.into_iter().rev() {
                match old {
                    Some(v) => self.current.insert(k, v),
                    None => self.current.remove(&k),
                };
            }
            if ok {
                return true;
            }
        }
        self.dead.insert(placed);
        false
    }
}

/// True iff the committed updates in `history` and every transaction in
/// `candidates` can be arranged in one serial order.
pub fn brute_force_serializable(
    history: &[HistoryEvent],
    candidates: &[HistoryEvent],
) -> Result<bool, OracleError> {
    let updates = history
        .iter()
        .filter(|e| e.kind == TxnKind::Update && e.status == TxnStatus::Committed);
    let txns: Vec<Txn<'_>> = updates
        .chain(candidates.iter())
        .map(|e| Txn {
            reads: &e.read_set,
            writes: &e.write_set,
        })
        .collect();
    if txns.len() > MAX_ORACLE_TXNS {
        return Err(OracleError::TooLarge {
            got: txns.len(),
            max: MAX_ORACLE_TXNS,
        });
    }
    let mut search = Search {
        txns,
        current: HashMap::new(),
        dead: HashSet::new(),
    };
    Ok(search.run(0))
}
