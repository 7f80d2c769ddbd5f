//! Graph workloads: edge-list ingestion, random-walk down-sampling and
//! random-walk transactions.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ObjectId;

/// Clustered co-purchase-style graph shipped with the crate.
pub const BUILTIN_AMAZON_LIKE: &str = "builtin:amazon-like";
const AMAZON_LIKE_EDGES: &str = include_str!("../../data/amazon-like.edges");

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("i/o error reading edge list: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: cannot parse {content:?} as \"u v\"")]
    Parse { line: usize, content: String },
    #[error("edge list has no edges")]
    Empty,
    #[error("cannot sample {target} nodes from a graph with {nodes}")]
    TargetTooLarge { target: usize, nodes: usize },
    #[error("invalid graph workload: {0}")]
    Invalid(String),
}

/// Undirected simple graph. Node `i` carries its original label
/// `labels[i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<u32>>,
    labels: Vec<u64>,
}

impl Graph {
    /// Builds a graph on nodes `0..n` labelled by their index.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut sets = vec![BTreeSet::new(); n];
        for (u, v) in edges {
            if u != v {
                sets[u as usize].insert(v);
                sets[v as usize].insert(u);
            }
        }
        Self {
            adj: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            labels: (0..n as u64).collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, n: u32) -> &[u32] {
        &self.adj[n as usize]
    }

    pub fn degree(&self, n: u32) -> usize {
        self.adj[n as usize].len()
    }

    pub fn label(&self, n: u32) -> u64 {
        self.labels[n as usize]
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, ns)| {
            ns.iter()
                .filter(move |&&v| (u as u32) < v)
                .map(move |&v| (u as u32, v))
        })
    }

    /// Subgraph induced on `nodes`, relabelled `0..nodes.len()` in the given
    /// order. Labels are carried over from this graph.
    pub fn induced(&self, nodes: &[u32]) -> Graph {
        let index: HashMap<u32, u32> = nodes
            .iter()
            .enumerate()
            .map(|(i, &n)| (n, i as u32))
            .collect();
        let adj = nodes
            .iter()
            .map(|&n| {
                let mut out: Vec<u32> = self.adj[n as usize]
                    .iter()
                    .filter_map(|m| index.get(m).copied())
                    .collect();
                out.sort_unstable();
                out
            })
            .collect();
        Graph {
            adj,
            labels: nodes.iter().map(|&n| self.labels[n as usize]).collect(),
        }
    }

    /// Mean local clustering coefficient; nodes of degree < 2 count as 0.
    pub fn average_clustering(&self) -> f64 {
        if self.adj.is_empty() {
            return 0.0;
        }
        let total: f64 = (0..self.adj.len())
            .map(|u| {
                let ns = &self.adj[u];
                let d = ns.len();
                if d < 2 {
                    return 0.0;
                }
                let mut links = 0usize;
                for (i, &a) in ns.iter().enumerate() {
                    for &b in &ns[i + 1..] {
                        if self.adj[a as usize].binary_search(&b).is_ok() {
                            links += 1;
                        }
                    }
                }
                2.0 * links as f64 / (d * (d - 1)) as f64
            })
            .sum();
        total / self.adj.len() as f64
    }

    /// Writes `u v` lines using the original labels.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# nodes: {} edges: {}", self.node_count(), self.edge_count())?;
        for (u, v) in self.edges() {
            writeln!(w, "{} {}", self.labels[u as usize], self.labels[v as usize])?;
        }
        Ok(())
    }

    /// Two-column CSV mapping object id to original node label.
    pub fn write_relabel_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["object_id", "original_label"])?;
        for (i, l) in self.labels.iter().enumerate() {
            out.write_record([i.to_string(), l.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Parses a whitespace-separated edge list. `#` lines and blank lines are
/// skipped, self loops dropped, duplicates collapsed and direction ignored.
/// Nodes are numbered in order of first appearance.
pub fn parse_edge_list<R: BufRead>(r: R) -> Result<Graph, GraphError> {
    let mut ids: HashMap<u64, u32> = HashMap::new();
    let mut labels = Vec::new();
    let mut edges = Vec::new();
    let mut intern = |l: u64, labels: &mut Vec<u64>| {
        *ids.entry(l).or_insert_with(|| {
            labels.push(l);
            (labels.len() - 1) as u32
        })
    };
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut parts = t.split_whitespace();
        let parsed = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => a.parse::<u64>().ok().zip(b.parse::<u64>().ok()),
            _ => None,
        };
        let (a, b) = parsed.ok_or_else(|| GraphError::Parse {
            line: i + 1,
            content: line.clone(),
        })?;
        let u = intern(a, &mut labels);
        let v = intern(b, &mut labels);
        edges.push((u, v));
    }
    let mut g = Graph::from_edges(labels.len(), edges);
    if g.edge_count() == 0 {
        return Err(GraphError::Empty);
    }
    g.labels = labels;
    Ok(g)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph, GraphError> {
    let f = std::fs::File::open(path)?;
    parse_edge_list(BufReader::new(f))
}

/// The shipped clustered graph.
pub fn builtin_amazon_like() -> Graph {
    parse_edge_list(AMAZON_LIKE_EDGES.as_bytes()).expect("shipped edge list parses")
}

/// First `target` distinct nodes visited by a walk that returns to its
/// start with probability `restart_prob` per step. When no new node turns
/// up for `100 · target` steps the walk starts over from a fresh uniform
/// node, keeping what it found.
pub fn random_walk_downsample<R: Rng + ?Sized>(
    g: &Graph,
    target: usize,
    restart_prob: f64,
    rng: &mut R,
) -> Result<Graph, GraphError> {
    let n = g.node_count();
    if target > n {
        return Err(GraphError::TargetTooLarge { target, nodes: n });
    }
    if !(0.0..=1.0).contains(&restart_prob) {
        return Err(GraphError::Invalid(format!(
            "restart_prob must be in [0, 1], got {restart_prob}"
        )));
    }
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(target);
    let mut visit = |v: u32, order: &mut Vec<u32>| {
        if !std::mem::replace(&mut seen[v as usize], true) {
            order.push(v);
            true
        } else {
            false
        }
    };
    let stall_limit = 100 * target.max(1);
    let mut start = rng.gen_range(0..n) as u32;
    let mut cur = start;
    let mut idle = 0usize;
    if target > 0 {
        visit(start, &mut order);
    }
    while order.len() < target {
        if idle >= stall_limit {
            start = rng.gen_range(0..n) as u32;
            cur = start;
            idle = 0;
            if visit(cur, &mut order) {
                continue;
            }
        }
        let ns = g.neighbors(cur);
        cur = if ns.is_empty() || rng.gen_bool(restart_prob) {
            start
        } else {
            ns[rng.gen_range(0..ns.len())]
        };
        if visit(cur, &mut order) {
            idle = 0;
        } else {
            idle += 1;
        }
    }
    Ok(g.induced(&order))
}

/// `target` nodes chosen uniformly without replacement; the comparison
/// point for the walk sampler.
pub fn uniform_node_sample<R: Rng + ?Sized>(
    g: &Graph,
    target: usize,
    rng: &mut R,
) -> Result<Graph, GraphError> {
    let n = g.node_count();
    if target > n {
        return Err(GraphError::TargetTooLarge { target, nodes: n });
    }
    let mut nodes: Vec<u32> = (0..n as u32).collect();
    nodes.shuffle(rng);
    nodes.truncate(target);
    Ok(g.induced(&nodes))
}

/// Start node uniform, then `walk_len` steps to uniform neighbours. An
/// isolated start repeats itself.
pub fn gen_graph_txn<R: Rng + ?Sized>(g: &Graph, walk_len: usize, rng: &mut R) -> Vec<ObjectId> {
    let mut cur = rng.gen_range(0..g.node_count()) as u32;
    let mut keys = Vec::with_capacity(walk_len + 1);
    keys.push(ObjectId(cur));
    for _ in 0..walk_len {
        let ns = g.neighbors(cur);
        if !ns.is_empty() {
            cur = ns[rng.gen_range(0..ns.len())];
        }
        keys.push(ObjectId(cur));
    }
    keys
}

/// Parameters of the clustered generator behind the shipped graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusteredParams {
    pub communities: usize,
    pub min_size: usize,
    pub max_size: usize,
    /// Probability of each intra-community edge beyond a spanning ring.
    pub p_in: f64,
    /// Random inter-community edges per community, on top of a ring.
    pub links_per_community: f64,
}

impl Default for ClusteredParams {
    fn default() -> Self {
        Self {
            communities: 2500,
            min_size: 3,
            max_size: 6,
            p_in: 0.8,
            links_per_community: 1.0,
        }
    }
}

/// Dense small communities joined by sparse random links.
pub fn clustered_graph<R: Rng + ?Sized>(p: ClusteredParams, rng: &mut R) -> Graph {
    let mut ranges = Vec::with_capacity(p.communities);
    let mut n = 0usize;
    for _ in 0..p.communities {
        let size = rng.gen_range(p.min_size..=p.max_size);
        ranges.push(n..n + size);
        n += size;
    }
    let mut edges = Vec::new();
    for r in &ranges {
        let members: Vec<u32> = r.clone().map(|v| v as u32).collect();
        for (i, &a) in members.iter().enumerate() {
            for (j, &b) in members.iter().enumerate().skip(i + 1) {
                let ring = j == i + 1 || (i == 0 && j == members.len() - 1);
                if ring || rng.gen_bool(p.p_in) {
                    edges.push((a, b));
                }
            }
        }
    }
    // a ring of single links keeps everything reachable; the rest are random
    for c in 0..p.communities {
        let next = (c + 1) % p.communities;
        if next != c {
            let a = rng.gen_range(ranges[c].clone()) as u32;
            let b = rng.gen_range(ranges[next].clone()) as u32;
            edges.push((a, b));
        }
    }
    let extra = (p.links_per_community * p.communities as f64).round() as usize;
    for _ in 0..extra {
        let a = rng.gen_range(0..n) as u32;
        let b = rng.gen_range(0..n) as u32;
        edges.push((a, b));
    }
    Graph::from_edges(n, edges)
}

fn default_target() -> usize {
    1000
}

fn default_restart() -> f64 {
    0.15
}

fn default_walk() -> usize {
    4
}

/// Graph workload settings. `edge_list` is a file path or
/// `builtin:amazon-like`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub edge_list: String,
    #[serde(default = "default_target")]
    pub target_nodes: usize,
    #[serde(default = "default_restart")]
    pub restart_prob: f64,
    /// Steps per transaction; keys = start node plus one per step.
    #[serde(default = "default_walk")]
    pub walk_len: usize,
}

impl GraphSpec {
    pub fn amazon_like() -> Self {
        Self {
            edge_list: BUILTIN_AMAZON_LIKE.into(),
            target_nodes: default_target(),
            restart_prob: default_restart(),
            walk_len: default_walk(),
        }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.walk_len == 0 {
            return Err(GraphError::Invalid("walk_len must be at least 1".into()));
        }
        if self.target_nodes == 0 {
            return Err(GraphError::Invalid("target_nodes must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.restart_prob) {
            return Err(GraphError::Invalid(format!(
                "restart_prob must be in [0, 1], got {}",
                self.restart_prob
            )));
        }
        Ok(())
    }

    /// Loads the source graph and down-samples it.
    pub fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Graph, GraphError> {
        self.validate()?;
        let g = if self.edge_list == BUILTIN_AMAZON_LIKE {
            builtin_amazon_like()
        } else {
            load_edge_list(&self.edge_list)?
        };
        random_walk_downsample(&g, self.target_nodes, self.restart_prob, rng)
    }
}
