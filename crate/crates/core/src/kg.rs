//! Knowledge graph storage: interned entities and relations, deduplicated
//! triples, and a bidirectional adjacency index.
//!
//! Ids are dense integers assigned in first-seen order while loading, so every
//! downstream ordering (neighbor lists, node visit order, community indices)
//! is deterministic for a given input file.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty graph source")]
    EmptySource,
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: field `{field}` is empty")]
    EmptyField { line: usize, field: &'static str },
    #[error("unknown entity id {0}")]
    UnknownEntity(u32),
    #[error("triple ({0}) does not belong to the graph")]
    ForeignTriple(String),
    #[error("subgraphs were extracted from different graphs")]
    MismatchedParents,
}

/// Interned entity identifier.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct EntityId(pub u32);

/// Interned relation identifier.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// A `(head, relation, tail)` fact. Identity is the full tuple.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }

    pub fn is_self_loop(&self) -> bool {
        self.head == self.tail
    }

    /// The endpoint opposite `e`, if `e` is an endpoint.
    pub fn other(&self, e: EntityId) -> Option<EntityId> {
        if self.head == e {
            Some(self.tail)
        } else if self.tail == e {
            Some(self.head)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripleFormat {
    Tsv,
    Jsonl,
}

impl std::str::FromStr for TripleFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(Self::Tsv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(format!("unknown triple format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
    Both,
}

/// Summary record emitted after ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub self_loops: usize,
}

/// Content fingerprint of a graph. Subgraphs carry their parent's
/// fingerprint so that subgraphs from different graphs are never compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GraphFingerprint(pub u64);

/// Directed labeled multigraph, immutable once built.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entity_labels: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relation_labels: Vec<String>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    out_adj: Vec<Vec<(RelationId, EntityId)>>,
    in_adj: Vec<Vec<(RelationId, EntityId)>>,
    fingerprint: GraphFingerprint,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.entity_labels == other.entity_labels
            && self.relation_labels == other.relation_labels
            && self.triples == other.triples
    }
}

#[derive(Debug, Deserialize)]
struct JsonRecord {
    head: String,
    relation: String,
    tail: String,
}

/// Incremental builder used by the loaders and by tests.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    entity_labels: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relation_labels: Vec<String>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entity with no edges. Returns its id.
    pub fn entity(&mut self, label: &str) -> EntityId {
        if let Some(&id) = self.entity_index.get(label) {
            return id;
        }
        let id = EntityId(self.entity_labels.len() as u32);
        self.entity_labels.push(label.to_owned());
        self.entity_index.insert(label.to_owned(), id);
        id
    }

    fn relation(&mut self, label: &str) -> RelationId {
        if let Some(&id) = self.relation_index.get(label) {
            return id;
        }
        let id = RelationId(self.relation_labels.len() as u32);
        self.relation_labels.push(label.to_owned());
        self.relation_index.insert(label.to_owned(), id);
        id
    }

    /// Adds a triple. Returns `false` when it was already present.
    pub fn triple(&mut self, head: &str, relation: &str, tail: &str) -> bool {
        let h = self.entity(head);
        let r = self.relation(relation);
        let t = self.entity(tail);
        let triple = Triple::new(h, r, t);
        if self.triple_set.insert(triple) {
            if triple.is_self_loop() {
                tracing::warn!(entity = head, relation, "self-loop triple");
            }
            self.triples.push(triple);
            true
        } else {
            false
        }
    }

    pub fn build(self) -> KnowledgeGraph {
        let n = self.entity_labels.len();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for t in &self.triples {
            out_adj[t.head.index()].push((t.relation, t.tail));
            in_adj[t.tail.index()].push((t.relation, t.head));
        }
        for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            list.sort_unstable();
        }

        let mut hasher = Sha256::new();
        for t in &self.triples {
            hasher.update(self.entity_labels[t.head.index()].as_bytes());
            hasher.update([0]);
            hasher.update(self.relation_labels[t.relation.index()].as_bytes());
            hasher.update([0]);
            hasher.update(self.entity_labels[t.tail.index()].as_bytes());
            hasher.update([1]);
        }
        for label in &self.entity_labels {
            hasher.update(label.as_bytes());
            hasher.update([2]);
        }
        let digest = hasher.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);

        KnowledgeGraph {
            entity_labels: self.entity_labels,
            entity_index: self.entity_index,
            relation_labels: self.relation_labels,
            relation_index: self.relation_index,
            triples: self.triples,
            triple_set: self.triple_set,
            out_adj,
            in_adj,
            fingerprint: GraphFingerprint(u64::from_le_bytes(head)),
        }
    }
}

fn check_field(value: &str, line: usize, field: &'static str) -> Result<(), KgError> {
    if value.is_empty() {
        Err(KgError::EmptyField { line, field })
    } else {
        Ok(())
    }
}

/// Loads a triple file. Duplicate records are stored once.
pub fn load_graph(path: &Path, format: TripleFormat) -> Result<KnowledgeGraph, KgError> {
    let io_err = |source| KgError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let reader = BufReader::new(file);
    let mut builder = GraphBuilder::new();
    let mut records = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err)?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (head, relation, tail) = match format {
            TripleFormat::Tsv => {
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 3 {
                    return Err(KgError::Malformed {
                        line: line_no,
                        reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
                    });
                }
                (
                    fields[0].to_owned(),
                    fields[1].to_owned(),
                    fields[2].to_owned(),
                )
            }
            TripleFormat::Jsonl => {
                let value: serde_json::Value =
                    serde_json::from_str(line).map_err(|e| KgError::Malformed {
                        line: line_no,
                        reason: e.to_string(),
                    })?;
                let keys = value.as_object().map(|o| o.len()).unwrap_or(0);
                if keys != 3 {
                    return Err(KgError::Malformed {
                        line: line_no,
                        reason: "expected exactly the keys head, relation, tail".into(),
                    });
                }
                let rec: JsonRecord =
                    serde_json::from_value(value).map_err(|e| KgError::Malformed {
                        line: line_no,
                        reason: e.to_string(),
                    })?;
                (rec.head, rec.relation, rec.tail)
            }
        };
        check_field(&head, line_no, "head")?;
        check_field(&relation, line_no, "relation")?;
        check_field(&tail, line_no, "tail")?;
        builder.triple(&head, &relation, &tail);
        records += 1;
    }

    if records == 0 {
        return Err(KgError::EmptySource);
    }
    let graph = builder.build();
    tracing::info!(
        entities = graph.entity_count(),
        relations = graph.relation_count(),
        triples = graph.triple_count(),
        "graph loaded"
    );
    Ok(graph)
}

impl KnowledgeGraph {
    /// Builds a graph from `(head, relation, tail)` label tuples.
    pub fn from_triples<'a, I>(triples: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let mut b = GraphBuilder::new();
        for (h, r, t) in triples {
            b.triple(h, r, t);
        }
        b.build()
    }

    pub fn entity_count(&self) -> usize {
        self.entity_labels.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_labels.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entity_labels.is_empty()
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            entities: self.entity_count(),
            relations: self.relation_count(),
            triples: self.triple_count(),
            self_loops: self.triples.iter().filter(|t| t.is_self_loop()).count(),
        }
    }

    pub fn fingerprint(&self) -> GraphFingerprint {
        self.fingerprint
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entity_labels.len() as u32).map(EntityId)
    }

    /// Triples in insertion order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains_entity(&self, e: EntityId) -> bool {
        e.index() < self.entity_labels.len()
    }

    pub fn contains_triple(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    pub fn entity_label(&self, e: EntityId) -> &str {
        &self.entity_labels[e.index()]
    }

    pub fn relation_label(&self, r: RelationId) -> &str {
        &self.relation_labels[r.index()]
    }

    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entity_index.get(label).copied()
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relation_index.get(label).copied()
    }

    pub fn triple_labels(&self, t: &Triple) -> (&str, &str, &str) {
        (
            self.entity_label(t.head),
            self.relation_label(t.relation),
            self.entity_label(t.tail),
        )
    }

    /// Incident `(relation, other endpoint)` pairs, sorted by relation id
    /// then entity id. `Both` is the multiset union of `Out` and `In`, so a
    /// self-loop appears once per direction.
    pub fn neighbors(
        &self,
        e: EntityId,
        direction: Direction,
    ) -> Result<Vec<(RelationId, EntityId)>, KgError> {
        if !self.contains_entity(e) {
            return Err(KgError::UnknownEntity(e.0));
        }
        let out = &self.out_adj[e.index()];
        let inc = &self.in_adj[e.index()];
        Ok(match direction {
            Direction::Out => out.clone(),
            Direction::In => inc.clone(),
            Direction::Both => {
                let mut all = Vec::with_capacity(out.len() + inc.len());
                all.extend_from_slice(out);
                all.extend_from_slice(inc);
                all.sort_unstable();
                all
            }
        })
    }

    pub fn out_degree(&self, e: EntityId) -> usize {
        self.out_adj[e.index()].len()
    }

    pub fn in_degree(&self, e: EntityId) -> usize {
        self.in_adj[e.index()].len()
    }

    pub fn degree(&self, e: EntityId) -> usize {
        self.out_degree(e) + self.in_degree(e)
    }

    /// Triples incident to `e` in either direction; a self-loop is listed once.
    pub fn incident_triples(&self, e: EntityId) -> impl Iterator<Item = Triple> + '_ {
        let out = self.out_adj[e.index()]
            .iter()
            .map(move |&(r, t)| Triple::new(e, r, t));
        let inc = self.in_adj[e.index()]
            .iter()
            .filter(move |&&(_, h)| h != e)
            .map(move |&(r, h)| Triple::new(h, r, e));
        out.chain(inc)
    }

    pub fn induced_subgraph<I>(&self, triples: I) -> Result<Subgraph, KgError>
    where
        I: IntoIterator<Item = Triple>,
    {
        let mut set = BTreeSet::new();
        for t in triples {
            if !self.contains_triple(&t) {
                return Err(KgError::ForeignTriple(format!(
                    "{}, {}, {}",
                    t.head, t.relation, t.tail
                )));
            }
            set.insert(t);
        }
        Ok(Subgraph::from_parts(self.fingerprint, set))
    }
}

/// A set of triples drawn from one parent graph plus its induced entity set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgraph {
    parent: GraphFingerprint,
    triples: BTreeSet<Triple>,
    #[serde(skip)]
    entities: BTreeSet<EntityId>,
}

impl Subgraph {
    fn from_parts(parent: GraphFingerprint, triples: BTreeSet<Triple>) -> Self {
        let entities = triples.iter().flat_map(|t| [t.head, t.tail]).collect();
        Self {
            parent,
            triples,
            entities,
        }
    }

    /// Restores the derived entity set after deserialization.
    pub fn rehydrate(self) -> Self {
        Self::from_parts(self.parent, self.triples)
    }

    pub fn parent(&self) -> GraphFingerprint {
        self.parent
    }

    pub fn triples(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    pub fn entities(&self) -> &BTreeSet<EntityId> {
        &self.entities
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Jaccard index over triple sets. Two empty subgraphs score 0.
pub fn jaccard_similarity(a: &Subgraph, b: &Subgraph) -> Result<f64, KgError> {
    if a.parent != b.parent {
        return Err(KgError::MismatchedParents);
    }
    let inter = a.triples.intersection(&b.triples).count();
    let union = a.triples.len() + b.triples.len() - inter;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}
