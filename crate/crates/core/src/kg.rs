//! In-memory directed labeled multigraph over entity and relation identifiers.
//!
//! The store is loaded once from flat files and never mutated afterwards, so
//! any number of readers may share it. Edges are queryable in both directions:
//! an edge `(h, r, t)` is visible from `h` as `(r, Outgoing)` and from `t` as
//! `(r, Incoming)` because reasoning chains routinely need inverse traversal
//! (founder-of vs founded-by).
//!
//! File formats:
//! - triples: UTF-8, one `head<TAB>relation<TAB>tail` per line, `#` comments
//!   and blank lines ignored;
//! - labels: `id<TAB>label`, same comment/blank rules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::KgError;

/// Opaque entity identifier: a non-empty token with no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntityId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// Opaque relation identifier, unique per relation type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub String);

impl RelationId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RelationId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// Which side of a stored edge a query entity sits on.
///
/// `Outgoing` means the entity is the head, `Incoming` means it is the tail.
/// The `Ord` derive keeps `Incoming < Outgoing`, matching the lexicographic
/// order of the serialized names used in deterministic sorts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Incoming,
    Outgoing,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Incoming => f.write_str("incoming"),
            Direction::Outgoing => f.write_str("outgoing"),
        }
    }
}

/// A stored directed edge `(head, relation, tail)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(
        head: impl Into<EntityId>,
        relation: impl Into<RelationId>,
        tail: impl Into<EntityId>,
    ) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }
}

impl From<(&str, &str, &str)> for Triple {
    fn from((h, r, t): (&str, &str, &str)) -> Self {
        Triple::new(EntityId::from(h), RelationId::from(r), EntityId::from(t))
    }
}

/// A stored triple plus the direction it was traversed in.
///
/// For `Outgoing` the traversal ran head→tail, for `Incoming` tail→head.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DirectedTriple {
    pub triple: Triple,
    pub direction: Direction,
}

impl DirectedTriple {
    pub fn new(triple: Triple, direction: Direction) -> Self {
        Self { triple, direction }
    }

    /// Entity the traversal started from.
    pub fn source(&self) -> &EntityId {
        match self.direction {
            Direction::Outgoing => &self.triple.head,
            Direction::Incoming => &self.triple.tail,
        }
    }

    /// Entity the traversal arrived at.
    pub fn target(&self) -> &EntityId {
        match self.direction {
            Direction::Outgoing => &self.triple.tail,
            Direction::Incoming => &self.triple.head,
        }
    }
}

type EdgeIndex = BTreeMap<EntityId, BTreeMap<RelationId, BTreeSet<EntityId>>>;

/// Immutable in-memory graph with per-direction adjacency indexes and a
/// label table for entity linking.
#[derive(Debug, Default, Clone)]
pub struct GraphStore {
    triples: BTreeSet<Triple>,
    outgoing: EdgeIndex,
    incoming: EdgeIndex,
    labels: BTreeMap<EntityId, String>,
    by_label: BTreeMap<String, BTreeSet<EntityId>>,
}

impl GraphStore {
    /// Build a store from in-memory triples and labels. Triples deduplicate;
    /// entities without a label entry fall back to their id string.
    pub fn from_triples(
        triples: impl IntoIterator<Item = Triple>,
        labels: impl IntoIterator<Item = (EntityId, String)>,
    ) -> Self {
        let mut store = GraphStore::default();
        for (id, label) in labels {
            store.insert_label(id, label);
        }
        for t in triples {
            store.insert_triple(t);
        }
        store
    }

    /// Load a store from a triples file and a labels file.
    ///
    /// Every malformed row fails the load; the error lists all offending line
    /// numbers. A row is malformed when it does not have exactly the expected
    /// tab-separated fields or when an id token is empty or contains
    /// whitespace.
    pub fn load(triples_path: &Path, labels_path: &Path) -> Result<Self, KgError> {
        let mut store = GraphStore::default();

        let labels_text = read_file(labels_path)?;
        let mut bad_lines = Vec::new();
        for (lineno, line) in data_lines(&labels_text) {
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                [id, label] if is_token(id) => {
                    store.insert_label(EntityId::from(*id), label.trim().to_owned());
                }
                _ => bad_lines.push(lineno),
            }
        }
        if !bad_lines.is_empty() {
            return Err(KgError::MalformedRows {
                path: labels_path.to_owned(),
                lines: bad_lines,
            });
        }

        let triples_text = read_file(triples_path)?;
        let mut bad_lines = Vec::new();
        for (lineno, line) in data_lines(&triples_text) {
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                [h, r, t] if is_token(h) && is_token(r) && is_token(t) => {
                    store.insert_triple(Triple::from((*h, *r, *t)));
                }
                _ => bad_lines.push(lineno),
            }
        }
        if !bad_lines.is_empty() {
            return Err(KgError::MalformedRows {
                path: triples_path.to_owned(),
                lines: bad_lines,
            });
        }

        Ok(store)
    }

    fn insert_label(&mut self, id: EntityId, label: String) {
        let key = normalize_surface(&label);
        if !key.is_empty() {
            self.by_label.entry(key).or_default().insert(id.clone());
        }
        self.labels.insert(id, label);
    }

    fn insert_triple(&mut self, t: Triple) {
        for e in [&t.head, &t.tail] {
            if !self.labels.contains_key(e) {
                self.insert_label(e.clone(), e.0.clone());
            }
        }
        self.outgoing
            .entry(t.head.clone())
            .or_default()
            .entry(t.relation.clone())
            .or_default()
            .insert(t.tail.clone());
        self.incoming
            .entry(t.tail.clone())
            .or_default()
            .entry(t.relation.clone())
            .or_default()
            .insert(t.head.clone());
        self.triples.insert(t);
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.contains(t)
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    /// Human-readable label for an entity, falling back to the raw id.
    pub fn label(&self, e: &EntityId) -> &str {
        match self.labels.get(e) {
            Some(l) if !l.is_empty() => l,
            _ => e.as_str(),
        }
    }

    /// Deduplicated relations on edges incident to `e`, tagged with the
    /// direction as seen from `e`, sorted by (relation id, direction).
    pub fn relations_of(&self, e: &EntityId) -> Vec<(RelationId, Direction)> {
        let mut out: BTreeSet<(RelationId, Direction)> = BTreeSet::new();
        if let Some(rels) = self.outgoing.get(e) {
            out.extend(rels.keys().map(|r| (r.clone(), Direction::Outgoing)));
        }
        if let Some(rels) = self.incoming.get(e) {
            out.extend(rels.keys().map(|r| (r.clone(), Direction::Incoming)));
        }
        out.into_iter().collect()
    }

    /// Entities connected to `e` via `r` in the given direction, sorted and
    /// duplicate-free. Unknown entities and absent edges yield an empty list.
    pub fn neighbors(&self, e: &EntityId, r: &RelationId, direction: Direction) -> Vec<EntityId> {
        let index = match direction {
            Direction::Outgoing => &self.outgoing,
            Direction::Incoming => &self.incoming,
        };
        index
            .get(e)
            .and_then(|rels| rels.get(r))
            .map(|set| set.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Entity ids whose label equals `surface` case-insensitively after
    /// trimming and whitespace collapsing. Exact match only, sorted.
    pub fn resolve_label(&self, surface: &str) -> Vec<EntityId> {
        let key = normalize_surface(surface);
        if key.is_empty() {
            return Vec::new();
        }
        self.by_label
            .get(&key)
            .map(|set| set.iter().cloned().collect())
            .unwrap_or_default()
    }
}

/// Lowercase, trim, and collapse internal whitespace runs to single spaces.
fn normalize_surface(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

fn read_file(path: &Path) -> Result<String, KgError> {
    std::fs::read_to_string(path).map_err(|source| KgError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Yield `(1-based line number, line)` for data rows, skipping blanks and
/// `#` comments.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn fixture() -> GraphStore {
        GraphStore::from_triples(
            [
                Triple::from(("tencent", "founded_by", "pony_ma")),
                Triple::from(("pony_ma", "member_of", "npc")),
            ],
            [(EntityId::from("tencent"), "Tencent".to_owned())],
        )
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_parses_fixture_lines() {
        let triples = write_temp("tencent\tfounded_by\tpony_ma\npony_ma\tmember_of\tnpc\n");
        let labels = write_temp("tencent\tTencent\n");
        let store = GraphStore::load(triples.path(), labels.path()).unwrap();
        assert_eq!(store.len(), 2);
        assert!(store.contains(&Triple::from(("tencent", "founded_by", "pony_ma"))));
    }

    #[test]
    fn load_empty_file_gives_empty_store() {
        let triples = write_temp("");
        let labels = write_temp("");
        let store = GraphStore::load(triples.path(), labels.path()).unwrap();
        assert_eq!(store.len(), 0);
    }

    #[test]
    fn load_deduplicates_repeated_lines() {
        let triples = write_temp("a\tr\tb\na\tr\tb\n");
        let labels = write_temp("");
        let store = GraphStore::load(triples.path(), labels.path()).unwrap();
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn load_skips_comments_and_blanks() {
        let triples = write_temp("# header\n\na\tr\tb\n");
        let labels = write_temp("");
        let store = GraphStore::load(triples.path(), labels.path()).unwrap();
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn load_reports_malformed_line_numbers() {
        let triples = write_temp("a\tr\tb\nbroken line\nc\tr\n");
        let labels = write_temp("");
        let err = GraphStore::load(triples.path(), labels.path()).unwrap_err();
        match err {
            KgError::MalformedRows { lines, .. } => assert_eq!(lines, vec![2, 3]),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn load_rejects_ids_with_whitespace() {
        let triples = write_temp("pony ma\tr\tb\n");
        let labels = write_temp("");
        assert!(GraphStore::load(triples.path(), labels.path()).is_err());
    }

    #[test]
    fn load_missing_file_is_io_error() {
        let labels = write_temp("");
        let err = GraphStore::load(Path::new("/nonexistent/triples.tsv"), labels.path());
        assert!(matches!(err, Err(KgError::Io { .. })));
    }

    #[test]
    fn relations_of_tags_directions() {
        let store = fixture();
        assert_eq!(
            store.relations_of(&EntityId::from("pony_ma")),
            vec![
                (RelationId::from("founded_by"), Direction::Incoming),
                (RelationId::from("member_of"), Direction::Outgoing),
            ]
        );
        assert_eq!(
            store.relations_of(&EntityId::from("npc")),
            vec![(RelationId::from("member_of"), Direction::Incoming)]
        );
        assert!(store.relations_of(&EntityId::from("unknown_id")).is_empty());
    }

    #[test]
    fn neighbors_both_directions() {
        let store = fixture();
        assert_eq!(
            store.neighbors(
                &EntityId::from("tencent"),
                &RelationId::from("founded_by"),
                Direction::Outgoing
            ),
            vec![EntityId::from("pony_ma")]
        );
        assert_eq!(
            store.neighbors(
                &EntityId::from("pony_ma"),
                &RelationId::from("founded_by"),
                Direction::Incoming
            ),
            vec![EntityId::from("tencent")]
        );
        assert!(store
            .neighbors(
                &EntityId::from("tencent"),
                &RelationId::from("member_of"),
                Direction::Outgoing
            )
            .is_empty());
    }

    #[test]
    fn resolve_label_is_exact_case_insensitive() {
        let store = fixture();
        assert_eq!(store.resolve_label("Tencent"), vec![EntityId::from("tencent")]);
        assert_eq!(store.resolve_label("  tencent  "), vec![EntityId::from("tencent")]);
        assert!(store.resolve_label("Tenc").is_empty());
    }

    #[test]
    fn label_falls_back_to_id() {
        let store = fixture();
        assert_eq!(store.label(&EntityId::from("tencent")), "Tencent");
        assert_eq!(store.label(&EntityId::from("pony_ma")), "pony_ma");
    }

    #[test]
    fn directed_triple_endpoints() {
        let t = Triple::from(("a", "r", "b"));
        let out = DirectedTriple::new(t.clone(), Direction::Outgoing);
        assert_eq!(out.source(), &EntityId::from("a"));
        assert_eq!(out.target(), &EntityId::from("b"));
        let inc = DirectedTriple::new(t, Direction::Incoming);
        assert_eq!(inc.source(), &EntityId::from("b"));
        assert_eq!(inc.target(), &EntityId::from("a"));
    }

    /// Brute-force scan of all stored triples incident to `e`.
    fn relations_by_scan(store: &GraphStore, e: &EntityId) -> Vec<(RelationId, Direction)> {
        let mut out = BTreeSet::new();
        for t in store.triples() {
            if &t.head == e {
                out.insert((t.relation.clone(), Direction::Outgoing));
            }
            if &t.tail == e {
                out.insert((t.relation.clone(), Direction::Incoming));
            }
        }
        out.into_iter().collect()
    }

    fn arb_triples() -> impl Strategy<Value = Vec<Triple>> {
        let ids = prop::sample::select(vec!["a", "b", "c", "d", "e", "f", "g", "h"]);
        let rels = prop::sample::select(vec!["r0", "r1", "r2", "r3"]);
        prop::collection::vec((ids.clone(), rels, ids), 0..60)
            .prop_map(|v| v.into_iter().map(|(h, r, t)| Triple::from((h, r, t))).collect())
    }

    proptest! {
        #[test]
        fn roundtrip_neighbors(triples in arb_triples()) {
            let store = GraphStore::from_triples(triples, []);
            for t in store.triples() {
                prop_assert!(store
                    .neighbors(&t.head, &t.relation, Direction::Outgoing)
                    .contains(&t.tail));
                prop_assert!(store
                    .neighbors(&t.tail, &t.relation, Direction::Incoming)
                    .contains(&t.head));
            }
        }

        #[test]
        fn neighbors_sorted_and_unique(triples in arb_triples()) {
            let store = GraphStore::from_triples(triples, []);
            let entities: Vec<EntityId> = store
                .triples()
                .flat_map(|t| [t.head.clone(), t.tail.clone()])
                .collect();
            for e in &entities {
                for (r, d) in store.relations_of(e) {
                    let ns = store.neighbors(e, &r, d);
                    let mut sorted = ns.clone();
                    sorted.sort();
                    sorted.dedup();
                    prop_assert_eq!(&ns, &sorted);
                    prop_assert!(!ns.is_empty());
                }
            }
        }

        #[test]
        fn relations_of_matches_full_scan(triples in arb_triples()) {
            let store = GraphStore::from_triples(triples, []);
            for e in ["a", "b", "c", "d", "e", "f", "g", "h", "zz"] {
                let e = EntityId::from(e);
                prop_assert_eq!(store.relations_of(&e), relations_by_scan(&store, &e));
            }
        }
    }
}
