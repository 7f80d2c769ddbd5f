//! Shared vocabulary: object ids, versions, dependency lists and the
//! dependency-list algebra used by both the database and the cache.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Index of an object in the universe `[0, N)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl ObjectId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

/// Totally ordered version number. `Version::INITIAL` marks the bootstrap
/// state of an object that no transaction has written yet.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Version(pub u64);

impl Version {
    pub const INITIAL: Version = Version(0);
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// A reader of the owning object's version must not observe `key` at a
/// version smaller than `ver`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DependencyEntry {
    pub key: ObjectId,
    pub ver: Version,
}

impl DependencyEntry {
    pub fn new(key: ObjectId, ver: Version) -> Self {
        Self { key, ver }
    }
}

/// Maximum dependency-list length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DepBound {
    Finite(usize),
    #[serde(with = "unbounded_tag")]
    Unbounded,
}

mod unbounded_tag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("unbounded")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "unbounded" || s == "inf" {
            Ok(())
        } else {
            Err(serde::de::Error::custom(format!(
                "expected an integer or \"unbounded\", got {s:?}"
            )))
        }
    }
}

impl DepBound {
    pub fn limit(self) -> Option<usize> {
        match self {
            DepBound::Finite(k) => Some(k),
            DepBound::Unbounded => None,
        }
    }

    fn allows(self, len: usize) -> bool {
        self.limit().is_none_or(|k| len < k)
    }
}

impl fmt::Display for DepBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DepBound::Finite(k) => write!(f, "{k}"),
            DepBound::Unbounded => f.write_str("unbounded"),
        }
    }
}

/// Ordered dependency list, most recently touched entry first. Keys are
/// unique; construction goes through [`prune_lru`] or [`DependencyList::from_entries`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DependencyList {
    entries: Vec<DependencyEntry>,
}

impl DependencyList {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a list from entries given in recency order. Duplicate keys are
    /// collapsed onto their first position, keeping the largest version.
    pub fn from_entries(entries: impl IntoIterator<Item = DependencyEntry>) -> Self {
        let mut out: Vec<DependencyEntry> = Vec::new();
        let mut pos: HashMap<ObjectId, usize> = HashMap::new();
        for e in entries {
            match pos.get(&e.key) {
                Some(&i) => out[i].ver = out[i].ver.max(e.ver),
                None => {
                    pos.insert(e.key, out.len());
                    out.push(e);
                }
            }
        }
        Self { entries: out }
    }

    pub fn entries(&self) -> &[DependencyEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DependencyEntry> {
        self.entries.iter()
    }

    pub fn get(&self, key: ObjectId) -> Option<Version> {
        self.entries.iter().find(|e| e.key == key).map(|e| e.ver)
    }
}

impl<'a> IntoIterator for &'a DependencyList {
    type Item = &'a DependencyEntry;
    type IntoIter = std::slice::Iter<'a, DependencyEntry>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}

/// A key as accessed by a transaction: the version observed (read set) or
/// produced (write set), plus the dependency list the key carried.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessTuple {
    pub key: ObjectId,
    pub ver: Version,
    pub deps: DependencyList,
}

impl AccessTuple {
    pub fn new(key: ObjectId, ver: Version, deps: DependencyList) -> Self {
        Self { key, ver, deps }
    }
}

/// Result of merging a transaction's accesses: one entry per key carrying
/// the largest version seen, and the keys ordered most recent first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FullDepList {
    pub entries: Vec<DependencyEntry>,
    pub recency: Vec<ObjectId>,
}

impl FullDepList {
    pub fn without(&self, key: ObjectId) -> FullDepList {
        FullDepList {
            entries: self.entries.iter().copied().filter(|e| e.key != key).collect(),
            recency: self.recency.iter().copied().filter(|&k| k != key).collect(),
        }
    }

    pub fn version_of(&self, key: ObjectId) -> Option<Version> {
        self.entries.iter().find(|e| e.key == key).map(|e| e.ver)
    }
}

/// Unions `{(key, ver)} ∪ deps` over every tuple of both sets, keeping the
/// largest version per key.
///
/// Recency: keys the transaction accessed directly come first (read set,
/// then write set, in access order); inherited entries follow, interleaved
/// by their rank in the source lists so that the head of every inherited
/// list outranks the tail of any other.
pub fn merge_full_dep_list(read_set: &[AccessTuple], write_set: &[AccessTuple]) -> FullDepList {
    let mut max_ver: HashMap<ObjectId, Version> = HashMap::new();
    let mut recency: Vec<ObjectId> = Vec::new();
    let mut touch = |e: DependencyEntry, max_ver: &mut HashMap<ObjectId, Version>| {
        match max_ver.get_mut(&e.key) {
            Some(v) => *v = (*v).max(e.ver),
            None => {
                max_ver.insert(e.key, e.ver);
                recency.push(e.key);
            }
        }
    };

    let tuples = || read_set.iter().chain(write_set.iter());
    for t in tuples() {
        touch(DependencyEntry::new(t.key, t.ver), &mut max_ver);
    }
    let depth = tuples().map(|t| t.deps.len()).max().unwrap_or(0);
    for rank in 0..depth {
        for t in tuples() {
            if let Some(&e) = t.deps.entries().get(rank) {
                touch(e, &mut max_ver);
            }
        }
    }

    let entries = recency
        .iter()
        .map(|&k| DependencyEntry::new(k, max_ver[&k]))
        .collect();
    FullDepList { entries, recency }
}

/// Keeps the `bound` most recently touched keys of `full`, each at its
/// maximum version. Keys missing from `recency` rank after all listed ones,
/// in their order of first appearance in `full`.
pub fn prune_lru(full: &[DependencyEntry], recency: &[ObjectId], bound: DepBound) -> DependencyList {
    let mut max_ver: HashMap<ObjectId, Version> = HashMap::new();
    let mut first_seen: Vec<ObjectId> = Vec::new();
    for e in full {
        match max_ver.get_mut(&e.key) {
            Some(v) => *v = (*v).max(e.ver),
            None => {
                max_ver.insert(e.key, e.ver);
                first_seen.push(e.key);
            }
        }
    }

    let mut out = Vec::with_capacity(max_ver.len());
    let mut placed: HashMap<ObjectId, ()> = HashMap::new();
    for &k in recency.iter().chain(first_seen.iter()) {
        if !bound.allows(out.len()) {
            break;
        }
        if let Some(&v) = max_ver.get(&k) {
            if placed.insert(k, ()).is_none() {
                out.push(DependencyEntry::new(k, v));
            }
        }
    }
    DependencyList { entries: out }
}

/// Global monotone version allocator.
#[derive(Clone, Debug, Default)]
pub struct VersionClock {
    last: Version,
}

impl VersionClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_issued(&self) -> Version {
        self.last
    }

    /// Returns a version larger than every accessed version and every
    /// version issued before.
    pub fn next_txn_version(&mut self, accessed: impl IntoIterator<Item = Version>) -> Version {
        let floor = accessed.into_iter().fold(self.last, Version::max);
        self.last = Version(floor.0 + 1);
        self.last
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn o(i: u32) -> ObjectId {
        ObjectId(i)
    }

    fn e(k: u32, v: u64) -> DependencyEntry {
        DependencyEntry::new(o(k), Version(v))
    }

    fn deps(items: &[(u32, u64)]) -> DependencyList {
        DependencyList::from_entries(items.iter().map(|&(k, v)| e(k, v)))
    }

    fn as_map(list: &[DependencyEntry]) -> BTreeMap<u32, u64> {
        list.iter().map(|d| (d.key.0, d.ver.0)).collect()
    }

    #[test]
    fn merge_is_union_of_accessed_pairs_and_deps() {
        let (o1, o2, d, ee) = (1, 2, 30, 40);
        let read = vec![AccessTuple::new(o(o2), Version(9), deps(&[(d, 3)]))];
        let write = vec![AccessTuple::new(o(o1), Version(4), deps(&[(ee, 7)]))];
        let full = merge_full_dep_list(&read, &write);
        let expected: BTreeMap<u32, u64> = [(o2, 9), (d, 3), (o1, 4), (ee, 7)].into();
        assert_eq!(as_map(&full.entries), expected);
    }

    #[test]
    fn merge_of_nothing_is_empty() {
        let full = merge_full_dep_list(&[], &[]);
        assert!(full.entries.is_empty());
        assert!(full.recency.is_empty());
    }

    #[test]
    fn merge_puts_direct_accesses_before_inherited_entries() {
        let read = vec![
            AccessTuple::new(o(1), Version(2), deps(&[(7, 1), (8, 1)])),
            AccessTuple::new(o(2), Version(3), deps(&[(9, 2)])),
        ];
        let full = merge_full_dep_list(&read, &[]);
        assert_eq!(full.recency, vec![o(1), o(2), o(7), o(9), o(8)]);
    }

    #[test]
    fn prune_keeps_most_recent_keys() {
        let full: Vec<_> = (0..7).map(|k| e(k, 10 + k as u64)).collect();
        let recency: Vec<_> = (0..7).rev().map(o).collect();
        let list = prune_lru(&full, &recency, DepBound::Finite(5));
        assert_eq!(list.len(), 5);
        let keys: Vec<u32> = list.iter().map(|d| d.key.0).collect();
        assert_eq!(keys, vec![6, 5, 4, 3, 2]);
    }

    #[test]
    fn prune_under_capacity_keeps_recency_order() {
        let full = vec![e(3, 1), e(4, 2)];
        let list = prune_lru(&full, &[o(4), o(3)], DepBound::Finite(5));
        assert_eq!(list.entries(), &[e(4, 2), e(3, 1)]);
    }

    #[test]
    fn prune_supersedes_smaller_versions() {
        let full = vec![e(5, 3), e(5, 9)];
        let list = prune_lru(&full, &[o(5)], DepBound::Finite(5));
        assert_eq!(list.entries(), &[e(5, 9)]);
    }

    #[test]
    fn prune_to_zero_is_empty() {
        let list = prune_lru(&[e(1, 1)], &[o(1)], DepBound::Finite(0));
        assert!(list.is_empty());
    }

    #[test]
    fn clock_examples() {
        let mut c = VersionClock { last: Version(9) };
        assert_eq!(c.next_txn_version([Version(3), Version(5)]), Version(10));
        let mut c = VersionClock::new();
        assert_eq!(c.next_txn_version([]), Version(1));
        let mut c = VersionClock::new();
        assert_eq!(c.next_txn_version([Version(41)]), Version(42));
    }

    #[test]
    fn bound_round_trips_through_toml() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct W {
            k: DepBound,
        }
        for k in [DepBound::Finite(3), DepBound::Unbounded] {
            let s = toml::to_string(&W { k }).unwrap();
            assert_eq!(toml::from_str::<W>(&s).unwrap(), W { k });
        }
    }

    fn arb_tuple() -> impl Strategy<Value = AccessTuple> {
        (0u32..10, 0u64..12, proptest::collection::vec((0u32..10, 0u64..12), 0..=4)).prop_map(
            |(k, v, ds)| AccessTuple::new(o(k), Version(v), deps(&ds)),
        )
    }

    /// Independent oracle: enumerate every (key, ver) fact and take the
    /// per-key maximum.
    fn brute_force_union(tuples: &[AccessTuple]) -> BTreeMap<u32, u64> {
        let mut facts: Vec<(u32, u64)> = Vec::new();
        for t in tuples {
            facts.push((t.key.0, t.ver.0));
            for d in t.deps.iter() {
                facts.push((d.key.0, d.ver.0));
            }
        }
        let mut out = BTreeMap::new();
        for (k, _) in &facts {
            let best = facts.iter().filter(|(k2, _)| k2 == k).map(|&(_, v)| v).max().unwrap();
            out.insert(*k, best);
        }
        out
    }

    proptest! {
        #[test]
        fn merge_matches_brute_force_union(
            reads in proptest::collection::vec(arb_tuple(), 0..=3),
            writes in proptest::collection::vec(arb_tuple(), 0..=3),
        ) {
            let full = merge_full_dep_list(&reads, &writes);
            let all: Vec<_> = reads.iter().chain(writes.iter()).cloned().collect();
            prop_assert_eq!(as_map(&full.entries), brute_force_union(&all));
            prop_assert_eq!(full.recency.len(), full.entries.len());
        }

        #[test]
        fn prune_is_idempotent_and_bounded(
            reads in proptest::collection::vec(arb_tuple(), 0..=4),
            k in 0usize..8,
        ) {
            let full = merge_full_dep_list(&reads, &[]);
            let once = prune_lru(&full.entries, &full.recency, DepBound::Finite(k));
            let twice = prune_lru(once.entries(), &full.recency, DepBound::Finite(k));
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(once.len(), k.min(full.entries.len()));
            for d in once.iter() {
                prop_assert_eq!(Some(d.ver), full.version_of(d.key));
            }
        }

        #[test]
        fn unbounded_prune_is_identity_on_deduplicated_set(
            reads in proptest::collection::vec(arb_tuple(), 0..=4),
        ) {
            let full = merge_full_dep_list(&reads, &[]);
            let list = prune_lru(&full.entries, &full.recency, DepBound::Unbounded);
            prop_assert_eq!(list.entries(), &full.entries[..]);
        }

        #[test]
        fn clock_is_strictly_increasing(
            calls in proptest::collection::vec(proptest::collection::vec(0u64..50, 0..4), 1..40),
        ) {
            let mut c = VersionClock::new();
            let mut prev = Version(0);
            for acc in calls {
                let accessed: Vec<Version> = acc.iter().copied().map(Version).collect();
                let v = c.next_txn_version(accessed.iter().copied());
                prop_assert!(v > prev);
                prop_assert!(accessed.iter().all(|a| v > *a));
                prev = v;
            }
        }
    }
}
