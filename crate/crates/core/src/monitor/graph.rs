//! Serialization graph over committed update transactions.
//!
//! Node 0 stands for the initial state and writes every object at version
//! 0. Update nodes are added in commit order, and every edge points from an
//! earlier to a later node, which keeps the update-only graph acyclic by
//! construction. Anything that would break that order is rejected as a
//! malformed event.

use std::collections::HashMap;

use crate::history::{HistoryEvent, TxnId, TxnKind, TxnStatus};
use crate::model::{ObjectId, Version};

use super::MonitorError;

pub type NodeIdx = u32;

pub const INITIAL_NODE: NodeIdx = 0;

#[derive(Debug, Default)]
struct Node {
    txn_id: Option<TxnId>,
    version: Version,
    out: Vec<NodeIdx>,
}

#[derive(Debug)]
pub struct SerializationGraph {
    nodes: Vec<Node>,
    // edges: wr (writer → reader), ww (writer → next writer) and
    // rw (reader → next writer), stored as successor lists
    /// Per key, the versions written after the initial one with their writers.
    writes: HashMap<ObjectId, Vec<(Version, NodeIdx)>>,
    /// Update transactions that read a version without overwriting the key.
    readers: HashMap<(ObjectId, Version), Vec<NodeIdx>>,
    edges: usize,
    // DFS scratch space
    mark: Vec<u32>,
    stamp: u32,
    stack: Vec<NodeIdx>,
}

impl Default for SerializationGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl SerializationGraph {
    pub fn new() -> Self {
        Self {
            nodes: vec![Node::default()],
            writes: HashMap::new(),
            readers: HashMap::new(),
            edges: 0,
            mark: vec![0],
            stamp: 0,
            stack: Vec::new(),
        }
    }

    /// Number of update transactions recorded.
    pub fn update_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn last_version(&self) -> Version {
        self.nodes.last().map(|n| n.version).unwrap_or_default()
    }

    pub fn txn_of(&self, node: NodeIdx) -> Option<TxnId> {
        self.nodes.get(node as usize).and_then(|n| n.txn_id)
    }

    pub fn successors(&self, node: NodeIdx) -> &[NodeIdx] {
        &self.nodes[node as usize].out
    }

    fn latest(&self, key: ObjectId) -> (Version, NodeIdx) {
        self.writes
            .get(&key)
            .and_then(|w| w.last().copied())
            .unwrap_or((Version::INITIAL, INITIAL_NODE))
    }

    /// Node that wrote `key` at `ver`, if recorded.
    pub fn writer(&self, key: ObjectId, ver: Version) -> Option<NodeIdx> {
        if ver == Version::INITIAL {
            return Some(INITIAL_NODE);
        }
        let w = self.writes.get(&key)?;
        w.binary_search_by_key(&ver, |&(v, _)| v).ok().map(|i| w[i].1)
    }

    /// Node that wrote the first version of `key` after `ver`.
    pub fn next_writer(&self, key: ObjectId, ver: Version) -> Option<NodeIdx> {
        let w = self.writes.get(&key)?;
        let i = w.partition_point(|&(v, _)| v <= ver);
        w.get(i).map(|&(_, n)| n)
    }

    fn add_edge(&mut self, from: NodeIdx, to: NodeIdx) {
        debug_assert!(from < to);
        let out = &mut self.nodes[from as usize].out;
        if !out.contains(&to) {
            out.push(to);
            self.edges += 1;
        }
    }

    /// Appends a committed update transaction.
    pub fn add_update(&mut self, e: &HistoryEvent) -> Result<NodeIdx, MonitorError> {
        if e.kind != TxnKind::Update || e.status != TxnStatus::Committed {
            return Err(MonitorError::Malformed {
                txn: e.txn_id,
                reason: "not a committed update".into(),
            });
        }
        let version = e.commit_version().ok_or_else(|| MonitorError::Malformed {
            txn: e.txn_id,
            reason: "update without writes".into(),
        })?;
        if version <= self.last_version() {
            return Err(MonitorError::OutOfOrder {
                txn: e.txn_id,
                version,
                last: self.last_version(),
            });
        }
        if e.write_set.iter().any(|&(_, v)| v != version) {
            return Err(MonitorError::Malformed {
                txn: e.txn_id,
                reason: "write versions differ from commit version".into(),
            });
        }
        for &(k, v) in &e.read_set {
            let (latest, _) = self.latest(k);
            if v != latest {
                return Err(MonitorError::Malformed {
                    txn: e.txn_id,
                    reason: format!("read {k}@{v} but the latest committed version is {latest}"),
                });
            }
        }

        let node = self.nodes.len() as NodeIdx;
        self.nodes.push(Node {
            txn_id: Some(e.txn_id),
            version,
            out: Vec::new(),
        });
        self.mark.push(0);

        for &(k, v) in &e.read_set {
            let (_, w) = self.latest(k);
            self.add_edge(w, node);
            if !e.write_set.iter().any(|&(wk, _)| wk == k) {
                self.readers.entry((k, v)).or_default().push(node);
            }
        }
        for &(k, _) in &e.write_set {
            let (prev, w) = self.latest(k);
            self.add_edge(w, node);
            if let Some(rs) = self.readers.remove(&(k, prev)) {
                for r in rs {
                    if r != node {
                        self.add_edge(r, node);
                    }
                }
            }
            self.writes.entry(k).or_default().push((version, node));
        }
        Ok(node)
    }

    /// True iff adding a read-only transaction with these reads (wr edges
    /// from each writer, rw edges to each next writer) closes a cycle.
    pub fn read_only_creates_cycle(
        &mut self,
        txn: TxnId,
        reads: &[(ObjectId, Version)],
    ) -> Result<bool, MonitorError> {
        let mut targets: Vec<NodeIdx> = Vec::with_capacity(reads.len());
        for &(k, v) in reads {
            let w = self.writer(k, v).ok_or_else(|| MonitorError::Malformed {
                txn,
                reason: format!("read {k}@{v} which no recorded update wrote"),
            })?;
            targets.push(w);
        }
        let horizon = targets.iter().copied().max().unwrap_or(INITIAL_NODE);

        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.mark.iter_mut().for_each(|m| *m = 0);
            self.stamp = 1;
        }
        let stamp = self.stamp;

        self.stack.clear();
        for &(k, v) in reads {
            if let Some(n) = self.next_writer(k, v) {
                if n <= horizon {
                    self.stack.push(n);
                }
            }
        }
        let mut found = false;
        while let Some(n) = self.stack.pop() {
            if targets.contains(&n) {
                found = true;
                break;
            }
            if self.mark[n as usize] == stamp {
                continue;
            }
            self.mark[n as usize] = stamp;
            for &s in &self.nodes[n as usize].out {
                if s <= horizon && self.mark[s as usize] != stamp {
                    self.stack.push(s);
                }
            }
        }
        Ok(found)
    }

    /// Reachability between two nodes along graph edges.
    pub fn reaches(&self, from: NodeIdx, to: NodeIdx) -> bool {
        if from == to {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if n > to || std::mem::replace(&mut seen[n as usize], true) {
                continue;
            }
            stack.extend(self.nodes[n as usize].out.iter().copied());
        }
        false
    }
}
