//! Node and text embeddings.
//!
//! Node embeddings use untrained GraphSAGE-style inference: every entity gets
//! a seeded random feature vector, then each of `layers` rounds concatenates
//! a node's vector with the (unit-rescaled) mean over its closed neighborhood,
//! projects the result through a seeded random matrix, applies `tanh`, and
//! renormalizes.
//! Nodes with similar neighborhoods end up with similar vectors, which is the
//! property the partitioner and walker rely on.
//!
//! Text embeddings are hashed bag-of-words vectors with sublinear term
//! frequency, so near-identical dialogues are detectable without a model.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph};
use crate::text::{fnv1a, tokenize};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot embed an empty graph")]
    EmptyGraph,
    #[error("invalid embedding config: {0}")]
    InvalidConfig(String),
    #[error("no embedding for entity `{0}`")]
    MissingEntity(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub dimension: usize,
    pub layers: usize,
    pub seed: u64,
    pub aggregator: Aggregator,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dimension: 64,
            layers: 2,
            seed: 7,
            aggregator: Aggregator::Mean,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dimension < 2 {
            return Err(EmbeddingError::InvalidConfig("dimension must be >= 2".into()));
        }
        if self.layers < 1 {
            return Err(EmbeddingError::InvalidConfig("layers must be >= 1".into()));
        }
        Ok(())
    }
}

/// One record of an embedding file: an entity (or dialogue) id and its vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEmbedding {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Unit-norm vectors indexed by entity id.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    dimension: usize,
    vectors: Vec<Vec<f64>>,
}

impl Embeddings {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, e: EntityId) -> Option<&[f64]> {
        self.vectors.get(e.index()).map(Vec::as_slice)
    }

    /// Cosine between two entities' vectors. Panics on unknown ids.
    pub fn similarity(&self, a: EntityId, b: EntityId) -> f64 {
        dot_clamped(&self.vectors[a.index()], &self.vectors[b.index()])
    }

    /// Builds from vectors keyed by entity label; every entity must be present.
    pub fn from_labeled(
        graph: &KnowledgeGraph,
        dimension: usize,
        mut by_label: HashMap<String, Vec<f64>>,
    ) -> Result<Self, EmbeddingError> {
        let mut vectors = Vec::with_capacity(graph.entity_count());
        for e in graph.entities() {
            let label = graph.entity_label(e);
            let mut v = by_label
                .remove(label)
                .ok_or_else(|| EmbeddingError::MissingEntity(label.to_owned()))?;
            if v.len() != dimension {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dimension,
                    found: v.len(),
                });
            }
            normalize(&mut v);
            vectors.push(v);
        }
        Ok(Self { dimension, vectors })
    }

    pub fn records(&self, graph: &KnowledgeGraph) -> Vec<NodeEmbedding> {
        graph
            .entities()
            .map(|e| NodeEmbedding {
                id: graph.entity_label(e).to_owned(),
                vector: self.vectors[e.index()].clone(),
            })
            .collect()
    }

    pub fn write_jsonl(&self, graph: &KnowledgeGraph, path: &Path) -> Result<(), EmbeddingError> {
        let mut w = BufWriter::new(File::create(path)?);
        for rec in self.records(graph) {
            serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a JSONL file of `{"id": ..., "vector": [...]}` records.
pub fn load_external_embeddings(
    path: &Path,
    dimension: usize,
) -> Result<HashMap<String, Vec<f64>>, EmbeddingError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: NodeEmbedding =
            serde_json::from_str(&line).map_err(|e| EmbeddingError::Malformed {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        if rec.vector.len() != dimension {
            return Err(EmbeddingError::DimensionMismatch {
                expected: dimension,
                found: rec.vector.len(),
            });
        }
        out.insert(rec.id, rec.vector);
    }
    Ok(out)
}

pub fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn dot_clamped(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .clamp(-1.0, 1.0)
}

/// Dot product of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(dot_clamped(u, v))
}

fn random_unit(rng: &mut ChaCha8Rng, dimension: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dimension).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut v);
    v
}

fn initial_features(n: usize, cfg: &EmbeddingConfig) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            random_unit(&mut rng, cfg.dimension)
        })
        .collect()
}

/// Row-major `dimension x 2*dimension` projection for one layer.
fn layer_weights(cfg: &EmbeddingConfig, layer: usize) -> Vec<f64> {
    let d = cfg.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(layer as u64);
    let scale = (3.0 / (2.0 * d as f64)).sqrt();
    (0..d * 2 * d).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Runs `weights.len()` aggregation rounds over the given neighbor lists.
pub(crate) fn aggregate(
    mut features: Vec<Vec<f64>>,
    neighbors: &[Vec<usize>],
    weights: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let d = features.first().map(Vec::len).unwrap_or(0);
    for w in weights {
        let prev = &features;
        features = (0..prev.len())
            .into_par_iter()
            .map(|v| {
                let mut concat = Vec::with_capacity(2 * d);
                concat.extend_from_slice(&prev[v]);
                // mean over the closed neighborhood, rescaled to unit length so
                // it weighs as much as the node's own vector
                let mut mean = prev[v].clone();
                for &u in &neighbors[v] {
                    for (m, x) in mean.iter_mut().zip(&prev[u]) {
                        *m += x;
                    }
                }
                normalize(&mut mean);
                concat.extend_from_slice(&mean);
                let mut out: Vec<f64> = (0..d)
                    .map(|row| {
                        let r = &w[row * 2 * d..(row + 1) * 2 * d];
                        r.iter().zip(&concat).map(|(a, b)| a * b).sum::<f64>().tanh()
                    })
                    .collect();
                normalize(&mut out);
                out
            })
            .collect();
    }
    features
}

/// Distinct undirected neighbors of every entity, self excluded.
pub(crate) fn undirected_neighbors(g: &KnowledgeGraph) -> Vec<Vec<usize>> {
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); g.entity_count()];
    for t in g.triples() {
        if t.is_self_loop() {
            continue;
        }
        nbrs[t.head.index()].push(t.tail.index());
        nbrs[t.tail.index()].push(t.head.index());
    }
    for list in &mut nbrs {
        list.sort_unstable();
        list.dedup();
    }
    nbrs
}

pub fn embed_graph(g: &KnowledgeGraph, cfg: &EmbeddingConfig) -> Result<Embeddings, EmbeddingError> {
    cfg.validate()?;
    if g.is_empty() {
        return Err(EmbeddingError::EmptyGraph);
    }
    let features = initial_features(g.entity_count(), cfg);
    let weights: Vec<Vec<f64>> = (0..cfg.layers).map(|k| layer_weights(cfg, k)).collect();
    let vectors = aggregate(features, &undirected_neighbors(g), &weights);
    Ok(Embeddings {
        dimension: cfg.dimension,
        vectors,
    })
}

/// Hashed text vector. `embeddable` is false for text without word tokens,
/// in which case `vector` is all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding {
    pub vector: Vec<f64>,
    pub embeddable: bool,
}

pub fn embed_text(text: &str, dimension: usize) -> TextEmbedding {
    let dimension = dimension.max(2);
    let mut counts: HashMap<String, usize> = HashMap::new();
    for tok in tokenize(text) {
        *counts.entry(tok.to_lowercase()).or_default() += 1;
    }
    let mut vector = vec![0.0; dimension];
    if counts.is_empty() {
        return TextEmbedding {
            vector,
            embeddable: false,
        };
    }
    let mut tokens: Vec<_> = counts.into_iter().collect();
    tokens.sort();
    for (tok, tf) in tokens {
        let h = fnv1a(tok.as_bytes());
        let slot = (h % dimension as u64) as usize;
        let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
        vector[slot] += sign * (1.0 + (tf as f64).ln());
    }
    normalize(&mut vector);
    let embeddable = vector.iter().any(|x| *x != 0.0);
    TextEmbedding { vector, embeddable }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn barbell() -> KnowledgeGraph {
        KnowledgeGraph::from_triples([
            ("a", "r", "b"),
            ("a", "r", "c"),
            ("b", "r", "c"),
            ("c", "r", "d"),
            ("d", "r", "e"),
            ("d", "r", "f"),
            ("e", "r", "f"),
        ])
    }

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn deterministic_and_normalized() {
        let g = barbell();
        let cfg = EmbeddingConfig::default();
        let a = embed_graph(&g, &cfg).unwrap();
        let b = embed_graph(&g, &cfg).unwrap();
        assert_eq!(a, b);
        for e in g.entities() {
            assert!((norm(a.get(e).unwrap()) - 1.0).abs() < 1e-9);
        }
        let other = embed_graph(&g, &EmbeddingConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn identical_inputs_aggregate_identically() {
        // nodes 0 and 1 share the initial vector and the neighbor set {2, 3}
        let f = |x: f64| {
            let mut v = vec![x, 1.0 - x, 0.5];
            normalize(&mut v);
            v
        };
        let features = vec![f(0.2), f(0.2), f(0.7), f(0.9)];
        let neighbors = vec![vec![2, 3], vec![2, 3], vec![0, 1], vec![0, 1]];
        let cfg = EmbeddingConfig {
            dimension: 3,
            ..Default::default()
        };
        let weights = vec![layer_weights(&cfg, 0), layer_weights(&cfg, 1)];
        let out = aggregate(features, &neighbors, &weights);
        assert_eq!(out[0], out[1]);
        assert_ne!(out[0], out[2]);
    }

    #[test]
    fn locality_respects_depth() {
        // path 0-1-2-3-4-5; attaching a leaf to node 5 must not move node 0
        // with one layer, and must move node 4
        let base = KnowledgeGraph::from_triples([
            ("n0", "r", "n1"),
            ("n1", "r", "n2"),
            ("n2", "r", "n3"),
            ("n3", "r", "n4"),
            ("n4", "r", "n5"),
        ]);
        let grown = KnowledgeGraph::from_triples([
            ("n0", "r", "n1"),
            ("n1", "r", "n2"),
            ("n2", "r", "n3"),
            ("n3", "r", "n4"),
            ("n4", "r", "n5"),
            ("n5", "r", "leaf"),
        ]);
        let cfg = EmbeddingConfig {
            layers: 1,
            ..Default::default()
        };
        let a = embed_graph(&base, &cfg).unwrap();
        let b = embed_graph(&grown, &cfg).unwrap();
        let id = |g: &KnowledgeGraph, l: &str| g.entity_id(l).unwrap();
        assert_eq!(a.get(id(&base, "n0")), b.get(id(&grown, "n0")));
        assert_eq!(a.get(id(&base, "n4")), b.get(id(&grown, "n4")));
        assert_ne!(a.get(id(&base, "n5")), b.get(id(&grown, "n5")));

        let cfg2 = EmbeddingConfig {
            layers: 2,
            ..Default::default()
        };
        let a2 = embed_graph(&base, &cfg2).unwrap();
        let b2 = embed_graph(&grown, &cfg2).unwrap();
        assert_ne!(a2.get(id(&base, "n4")), b2.get(id(&grown, "n4")));
        assert_eq!(a2.get(id(&base, "n2")), b2.get(id(&grown, "n2")));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[0.6, 0.8], &[0.6, 0.8]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[0.6, 0.8], &[1.0, 0.0]).unwrap() - 0.6).abs() < 1e-15);
        assert!(matches!(
            cosine(&[1.0, 0.0], &[1.0, 0.0, 0.0]),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(EmbeddingConfig {
            dimension: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(EmbeddingConfig {
            layers: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        let empty = crate::kg::GraphBuilder::new().build();
        assert!(matches!(
            embed_graph(&empty, &EmbeddingConfig::default()),
            Err(EmbeddingError::EmptyGraph)
        ));
    }

    #[test]
    fn text_embedding_basics() {
        let a = embed_text("What causes fever?", 64);
        assert_eq!(a, embed_text("What causes fever?", 64));
        assert!(a.embeddable);
        assert!((norm(&a.vector) - 1.0).abs() < 1e-9);
        let empty = embed_text("", 64);
        assert!(!empty.embeddable);
        assert!(empty.vector.iter().all(|x| *x == 0.0));
        assert!(!embed_text("?!...", 64).embeddable);
    }

    #[test]
    fn external_file_roundtrip_and_mismatch() {
        let g = barbell();
        let emb = embed_graph(&g, &EmbeddingConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        emb.write_jsonl(&g, &path).unwrap();
        let map = load_external_embeddings(&path, 64).unwrap();
        let back = Embeddings::from_labeled(&g, 64, map).unwrap();
        for e in g.entities() {
            for (x, y) in back.get(e).unwrap().iter().zip(emb.get(e).unwrap()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert!(matches!(
            load_external_embeddings(&path, 32),
            Err(EmbeddingError::DimensionMismatch {
                expected: 32,
                found: 64
            })
        ));
    }
}
