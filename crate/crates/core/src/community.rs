//! Community partitioning: embedding-gated merges followed by Louvain
//! modularity optimization.
//!
//! The partitioning graph is the knowledge graph with relation labels and
//! directions erased: one undirected edge per distinct entity pair, self-loops
//! dropped. Edges carry weight 1, or `max(0.01, cosine)` when embedding
//! weights are enabled.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Embeddings;
use crate::kg::{EntityId, KnowledgeGraph};

/// Floor applied to similarity-derived edge weights.
pub const MIN_EDGE_WEIGHT: f64 = 0.01;

#[derive(Debug, Error)]
pub enum CommunityError {
    #[error("cannot partition an empty graph")]
    EmptyGraph,
    #[error("missing embedding for entity {0}")]
    MissingEmbedding(EntityId),
    #[error("invalid partition config: {0}")]
    InvalidConfig(String),
    #[error("partition file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionConfig {
    /// Cosine threshold above which an edge's endpoints are merged.
    pub theta: f64,
    pub use_embedding_weights: bool,
    pub min_community_size: usize,
    pub max_passes: usize,
    /// A pass improving modularity by less than this ends optimization.
    pub epsilon: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            theta: 0.8,
            use_embedding_weights: true,
            min_community_size: 3,
            max_passes: 20,
            epsilon: 1e-7,
        }
    }
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<(), CommunityError> {
        if !(-1.0..=1.0).contains(&self.theta) {
            return Err(CommunityError::InvalidConfig("theta must lie in [-1, 1]".into()));
        }
        if self.max_passes < 1 {
            return Err(CommunityError::InvalidConfig("max_passes must be >= 1".into()));
        }
        if self.min_community_size < 1 {
            return Err(CommunityError::InvalidConfig(
                "min_community_size must be >= 1".into(),
            ));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(CommunityError::InvalidConfig("epsilon must be >= 0".into()));
        }
        Ok(())
    }
}

/// Undirected edge weights keyed by `(min id, max id)`.
#[derive(Debug, Clone, Default)]
pub struct EdgeWeights(HashMap<(EntityId, EntityId), f64>);

impl EdgeWeights {
    pub fn from_embeddings(g: &KnowledgeGraph, emb: &Embeddings) -> Self {
        let mut map = HashMap::new();
        for (u, v) in erased_edges(g) {
            map.insert((u, v), emb.similarity(u, v).max(MIN_EDGE_WEIGHT));
        }
        Self(map)
    }

    pub fn insert(&mut self, a: EntityId, b: EntityId, w: f64) {
        self.0.insert(ordered(a, b), w);
    }

    pub fn get(&self, a: EntityId, b: EntityId) -> Option<f64> {
        self.0.get(&ordered(a, b)).copied()
    }
}

fn ordered(a: EntityId, b: EntityId) -> (EntityId, EntityId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Distinct undirected non-loop entity pairs, sorted.
pub fn erased_edges(g: &KnowledgeGraph) -> Vec<(EntityId, EntityId)> {
    let mut edges: Vec<_> = g
        .triples()
        .iter()
        .filter(|t| !t.is_self_loop())
        .map(|t| ordered(t.head, t.tail))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Assignment of every entity to exactly one community.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition {
    assignment: Vec<usize>,
    communities: Vec<Vec<EntityId>>,
    /// Modularity under the edge weights used to produce the partition.
    pub modularity: f64,
}

impl CommunityPartition {
    /// Canonicalizes arbitrary labels: communities are numbered in order of
    /// their smallest member.
    pub fn from_labels(labels: &[usize], modularity: f64) -> Self {
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let mut assignment = Vec::with_capacity(labels.len());
        let mut communities: Vec<Vec<EntityId>> = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            let c = *remap.entry(l).or_insert_with(|| {
                communities.push(Vec::new());
                communities.len() - 1
            });
            assignment.push(c);
            communities[c].push(EntityId(i as u32));
        }
        Self {
            assignment,
            communities,
            modularity,
        }
    }

    pub fn community_of(&self, e: EntityId) -> usize {
        self.assignment[e.index()]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn communities(&self) -> &[Vec<EntityId>] {
        &self.communities
    }

    pub fn len(&self) -> usize {
        self.communities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.communities.is_empty()
    }

    pub fn sizes_histogram(&self) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for c in &self.communities {
            *hist.entry(c.len()).or_insert(0) += 1;
        }
        hist
    }

    /// Checks totality, disjointness and non-emptiness against `n` entities.
    pub fn is_valid_for(&self, n: usize) -> bool {
        if self.assignment.len() != n {
            return false;
        }
        let mut seen = vec![false; n];
        for (c, members) in self.communities.iter().enumerate() {
            if members.is_empty() {
                return false;
            }
            for e in members {
                let i = e.index();
                if i >= n || seen[i] || self.assignment[i] != c {
                    return false;
                }
                seen[i] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Undirected weighted graph used by the optimizer. `adj` lists every
/// non-loop edge in both directions; `loops[i]` is the self-loop weight.
#[derive(Debug, Clone)]
struct WeightedGraph {
    adj: Vec<Vec<(usize, f64)>>,
    loops: Vec<f64>,
    degree: Vec<f64>,
    two_m: f64,
}

impl WeightedGraph {
    fn from_kg(g: &KnowledgeGraph, weights: Option<&EdgeWeights>) -> Self {
        let n = g.entity_count();
        let mut adj = vec![Vec::new(); n];
        for (u, v) in erased_edges(g) {
            let w = weights.and_then(|ws| ws.get(u, v)).unwrap_or(1.0);
            adj[u.index()].push((v.index(), w));
            adj[v.index()].push((u.index(), w));
        }
        Self::new(adj, vec![0.0; n])
    }

    fn new(adj: Vec<Vec<(usize, f64)>>, loops: Vec<f64>) -> Self {
        let degree: Vec<f64> = adj
            .iter()
            .zip(&loops)
            .map(|(a, l)| a.iter().map(|(_, w)| w).sum::<f64>() + 2.0 * l)
            .collect();
        let two_m = degree.iter().sum();
        Self {
            adj,
            loops,
            degree,
            two_m,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn modularity(&self, comm: &[usize]) -> f64 {
        if self.two_m <= 0.0 {
            return 0.0;
        }
        let k = comm.iter().copied().max().map_or(0, |m| m + 1);
        let mut inside = vec![0.0; k];
        let mut total = vec![0.0; k];
        for i in 0..self.len() {
            let c = comm[i];
            total[c] += self.degree[i];
            inside[c] += 2.0 * self.loops[i];
            for &(j, w) in &self.adj[i] {
                if comm[j] == c {
                    inside[c] += w;
                }
            }
        }
        inside
            .iter()
            .zip(&total)
            .map(|(i, t)| i / self.two_m - (t / self.two_m).powi(2))
            .sum()
    }

    /// Greedy local moves until a sweep changes nothing or gains less than
    /// `epsilon`. Returns whether any node moved.
    fn local_moving(&self, comm: &mut [usize], epsilon: f64) -> bool {
        let n = self.len();
        let m2 = self.two_m;
        let mut total = vec![0.0; n];
        let mut size = vec![0usize; n];
        for i in 0..n {
            total[comm[i]] += self.degree[i];
            size[comm[i]] += 1;
        }
        let mut empty: Vec<usize> = (0..n).rev().filter(|&c| size[c] == 0).collect();
        let mut link = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut moved_any = false;
        let mut q = self.modularity(comm);

        const MAX_SWEEPS: usize = 1000;
        for _ in 0..MAX_SWEEPS {
            let mut moved = false;
            for i in 0..n {
                let old = comm[i];
                let ki = self.degree[i];
                for &(j, w) in &self.adj[i] {
                    let c = comm[j];
                    if link[c] == 0.0 {
                        touched.push(c);
                    }
                    link[c] += w;
                }
                total[old] -= ki;
                size[old] -= 1;

                let gain = |c: usize, link_c: f64| link_c - total[c] * ki / m2;
                let mut best = old;
                let mut best_gain = gain(old, link[old]);
                touched.sort_unstable();
                touched.dedup();
                for &c in &touched {
                    if c == old {
                        continue;
                    }
                    let g = gain(c, link[c]);
                    if g > best_gain + 1e-12 {
                        best = c;
                        best_gain = g;
                    }
                }
                // isolating the node gains exactly 0
                if size[old] > 0 && best_gain < -1e-12 {
                    if let Some(&fresh) = empty.last() {
                        best = fresh;
                    }
                }
                if best != old && size[best] == 0 {
                    empty.pop();
                }
                if size[old] == 0 && best != old {
                    empty.push(old);
                }
                comm[i] = best;
                total[best] += ki;
                size[best] += 1;
                if best != old {
                    moved = true;
                }
                for &c in &touched {
                    link[c] = 0.0;
                }
                touched.clear();
            }
            if !moved {
                break;
            }
            moved_any = true;
            let q_new = self.modularity(comm);
            debug_assert!(q_new >= q - 1e-10, "local move decreased modularity");
            let gained = q_new - q;
            q = q_new;
            if gained < epsilon {
                break;
            }
        }
        moved_any
    }

    /// Collapses communities into super-nodes; returns the coarse graph and
    /// the node → super-node map.
    fn aggregate(&self, comm: &[usize]) -> (Self, Vec<usize>) {
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let map: Vec<usize> = comm
            .iter()
            .map(|c| {
                let next = remap.len();
                *remap.entry(*c).or_insert(next)
            })
            .collect();
        let k = remap.len();
        let mut loops = vec![0.0; k];
        let mut edges: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        for i in 0..self.len() {
            let ci = map[i];
            loops[ci] += self.loops[i];
            for &(j, w) in &self.adj[i] {
                let cj = map[j];
                if ci == cj {
                    // each internal edge is visited from both ends
                    loops[ci] += w / 2.0;
                } else {
                    *edges[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        let adj = edges.into_iter().map(|m| m.into_iter().collect()).collect();
        (Self::new(adj, loops), map)
    }
}

/// Newman–Girvan modularity of `p`, unweighted unless `weights` is given.
/// A graph without edges has modularity 0.
pub fn modularity(g: &KnowledgeGraph, p: &CommunityPartition, weights: Option<&EdgeWeights>) -> f64 {
    WeightedGraph::from_kg(g, weights).modularity(p.assignment())
}

pub fn initialize_singletons(g: &KnowledgeGraph) -> Result<CommunityPartition, CommunityError> {
    if g.is_empty() {
        return Err(CommunityError::EmptyGraph);
    }
    let labels: Vec<usize> = (0..g.entity_count()).collect();
    let q = WeightedGraph::from_kg(g, None).modularity(&labels);
    Ok(CommunityPartition::from_labels(&labels, q))
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Merges the communities of every edge whose endpoint cosine exceeds
/// `theta`, in descending similarity order.
pub fn propose_merges(
    g: &KnowledgeGraph,
    emb: &Embeddings,
    p: &CommunityPartition,
    theta: f64,
) -> Result<CommunityPartition, CommunityError> {
    for e in g.entities() {
        if emb.get(e).is_none() {
            return Err(CommunityError::MissingEmbedding(e));
        }
    }
    let mut candidates: Vec<(f64, EntityId, EntityId)> = erased_edges(g)
        .into_iter()
        .map(|(u, v)| (emb.similarity(u, v), u, v))
        .filter(|(s, _, _)| *s > theta)
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));

    let n = g.entity_count();
    let mut uf = UnionFind::new(n);
    let mut first_member: HashMap<usize, usize> = HashMap::new();
    for (i, &c) in p.assignment().iter().enumerate() {
        match first_member.get(&c) {
            Some(&root) => uf.union(root, i),
            None => {
                first_member.insert(c, i);
            }
        }
    }
    for (_, u, v) in &candidates {
        uf.union(u.index(), v.index());
    }
    let labels: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
    let q = WeightedGraph::from_kg(g, None).modularity(&labels);
    Ok(CommunityPartition::from_labels(&labels, q))
}

/// Multi-level Louvain starting from `p`. Each pass runs local moves to
/// convergence and then coarsens; optimization stops when a pass gains less
/// than `cfg.epsilon` or after `cfg.max_passes` passes. When the coarsening
/// levels converge, single-node moves on the original graph refine the
/// result, and coarsening resumes if any node moved.
pub fn louvain_optimize(
    g: &KnowledgeGraph,
    p: &CommunityPartition,
    cfg: &PartitionConfig,
    weights: Option<&EdgeWeights>,
) -> CommunityPartition {
    let base = WeightedGraph::from_kg(g, weights);
    let mut labels: Vec<usize> = p.assignment().to_vec();
    let mut q = base.modularity(&labels);
    let mut passes = 0;

    while passes < cfg.max_passes {
        let mut graph = base.clone();
        let mut comm = labels.clone();
        let mut node_of: Vec<usize> = (0..base.len()).collect();
        let mut level = 0;
        while passes < cfg.max_passes {
            passes += 1;
            graph.local_moving(&mut comm, cfg.epsilon);
            labels = node_of.iter().map(|&s| comm[s]).collect();
            let q_new = base.modularity(&labels);
            assert!(
                q_new >= q - 1e-10,
                "modularity decreased in pass {passes}: {q} -> {q_new}"
            );
            let gained = q_new - q;
            q = q_new;

            let (coarse, map) = graph.aggregate(&comm);
            if coarse.len() == graph.len() || (level > 0 && gained < cfg.epsilon) {
                break;
            }
            node_of = node_of.iter().map(|&s| map[s]).collect();
            comm = (0..coarse.len()).collect();
            graph = coarse;
            level += 1;
        }

        let moved = base.local_moving(&mut labels, cfg.epsilon);
        let q_new = base.modularity(&labels);
        assert!(q_new >= q - 1e-10, "refinement decreased modularity");
        let gained = q_new - q;
        q = q_new;
        if !moved || gained < cfg.epsilon {
            break;
        }
    }

    CommunityPartition::from_labels(&labels, q)
}

/// Merges every community smaller than `min_size` into the neighboring
/// community it shares the most similar edge with (lowest index on ties).
/// Communities without neighbors are left alone.
fn absorb_small(
    g: &KnowledgeGraph,
    emb: &Embeddings,
    p: CommunityPartition,
    min_size: usize,
) -> CommunityPartition {
    let edges = erased_edges(g);
    let mut labels = p.assignment().to_vec();
    loop {
        let part = CommunityPartition::from_labels(&labels, 0.0);
        let mut best_link: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
        for &(u, v) in &edges {
            let (cu, cv) = (part.community_of(u), part.community_of(v));
            if cu == cv {
                continue;
            }
            let s = emb.similarity(u, v);
            for (from, to) in [(cu, cv), (cv, cu)] {
                let slot = best_link.entry(from).or_default().entry(to).or_insert(f64::NEG_INFINITY);
                if s > *slot {
                    *slot = s;
                }
            }
        }
        let small = part
            .communities()
            .iter()
            .enumerate()
            .filter(|(c, members)| members.len() < min_size && best_link.contains_key(c))
            .min_by_key(|(c, members)| (members.len(), *c))
            .map(|(c, _)| c);
        let Some(c) = small else { break };
        let mut target = None;
        let mut best = f64::NEG_INFINITY;
        for (&to, &s) in &best_link[&c] {
            if s > best {
                best = s;
                target = Some(to);
            }
        }
        let target = target.expect("community with links has a neighbor");
        for (i, l) in labels.iter_mut().enumerate() {
            if part.assignment()[i] == c {
                *l = part.communities()[target][0].index();
            } else {
                *l = part.communities()[part.assignment()[i]][0].index();
            }
        }
    }
    CommunityPartition::from_labels(&labels, 0.0)
}

/// Full partitioning: singletons, embedding-gated merges, Louvain, then
/// absorption of undersized communities.
pub fn partition_graph(
    g: &KnowledgeGraph,
    emb: &Embeddings,
    cfg: &PartitionConfig,
) -> Result<CommunityPartition, CommunityError> {
    cfg.validate()?;
    let weights = cfg
        .use_embedding_weights
        .then(|| EdgeWeights::from_embeddings(g, emb));
    let singletons = initialize_singletons(g)?;
    let merged = propose_merges(g, emb, &singletons, cfg.theta)?;
    let optimized = louvain_optimize(g, &merged, cfg, weights.as_ref());
    let mut finished = absorb_small(g, emb, optimized, cfg.min_community_size);
    finished.modularity = modularity(g, &finished, weights.as_ref());
    tracing::info!(
        communities = finished.len(),
        modularity = finished.modularity,
        "partition complete"
    );
    Ok(finished)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionRecord {
    Assignment {
        entity: String,
        entity_id: u32,
        community: usize,
    },
    Summary {
        k: usize,
        modularity: f64,
        sizes: Vec<SizeBucket>,
    },
}

/// Number of communities having exactly `size` members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeBucket {
    pub size: usize,
    pub count: usize,
}

pub fn write_partition(
    path: &Path,
    g: &KnowledgeGraph,
    p: &CommunityPartition,
) -> Result<(), CommunityError> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut emit = |rec: &PartitionRecord| -> std::io::Result<()> {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")
    };
    for e in g.entities() {
        emit(&PartitionRecord::Assignment {
            entity: g.entity_label(e).to_owned(),
            entity_id: e.0,
            community: p.community_of(e),
        })?;
    }
    emit(&PartitionRecord::Summary {
        k: p.len(),
        modularity: p.modularity,
        sizes: p
            .sizes_histogram()
            .into_iter()
            .map(|(size, count)| SizeBucket { size, count })
            .collect(),
    })?;
    w.flush()?;
    Ok(())
}

pub fn read_partition(path: &Path, g: &KnowledgeGraph) -> Result<CommunityPartition, CommunityError> {
    let reader = BufReader::new(File::open(path)?);
    let mut labels: Vec<Option<usize>> = vec![None; g.entity_count()];
    let mut q = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PartitionRecord = serde_json::from_str(&line)
            .map_err(|e| CommunityError::Format(format!("line {}: {e}", idx + 1)))?;
        match rec {
            PartitionRecord::Assignment {
                entity, community, ..
            } => {
                let id = g.entity_id(&entity).ok_or_else(|| {
                    CommunityError::Format(format!("unknown entity `{entity}`"))
                })?;
                labels[id.index()] = Some(community);
            }
            PartitionRecord::Summary { modularity, .. } => q = Some(modularity),
        }
    }
    let labels: Vec<usize> = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            l.ok_or_else(|| {
                CommunityError::Format(format!("no assignment for `{}`", g.entity_label(EntityId(i as u32))))
            })
        })
        .collect::<Result<_, _>>()?;
    let q = q.ok_or_else(|| CommunityError::Format("missing summary record".into()))?;
    Ok(CommunityPartition::from_labels(&labels, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{embed_graph, EmbeddingConfig};
    use crate::kg::GraphBuilder;

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

    #[test]
    fn singletons() {
        let g = KnowledgeGraph::from_triples([("a", "r", "b"), ("b", "r", "c"), ("c", "r", "d"), ("d", "r", "e")]);
        let p = initialize_singletons(&g).unwrap();
        assert_eq!(p.len(), 5);
        assert!(p.communities().iter().all(|c| c.len() == 1));
        assert!(p.modularity <= 0.0);
        assert!(p.is_valid_for(5));

        let mut b = GraphBuilder::new();
        b.entity("solo");
        let one = initialize_singletons(&b.build()).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.modularity, 0.0);

        assert!(matches!(
            initialize_singletons(&GraphBuilder::new().build()),
            Err(CommunityError::EmptyGraph)
        ));
    }

    #[test]
    fn one_community_has_zero_modularity() {
        let g = barbell();
        let p = CommunityPartition::from_labels(&[0; 6], 0.0);
        assert_eq!(modularity(&g, &p, None), 0.0);
    }

    #[test]
    fn barbell_two_cliques() {
        let g = barbell();
        let p = CommunityPartition::from_labels(&[0, 0, 0, 1, 1, 1], 0.0);
        let expected = 2.0 * (3.0 / 7.0 - 0.25);
        assert!((modularity(&g, &p, None) - expected).abs() < 1e-12);
    }

    #[test]
    fn weighted_modularity_uses_weights() {
        let g = KnowledgeGraph::from_triples([("a", "r", "b"), ("b", "r", "c")]);
        let (a, b, c) = (EntityId(0), EntityId(1), EntityId(2));
        let mut w = EdgeWeights::default();
        w.insert(a, b, 3.0);
        w.insert(b, c, 1.0);
        let p = CommunityPartition::from_labels(&[0, 0, 1], 0.0);
        // 2m = 8; in_0 = 6, tot_0 = 7, tot_1 = 1
        let expected = 6.0 / 8.0 - (7.0f64 / 8.0).powi(2) - (1.0f64 / 8.0).powi(2);
        assert!((modularity(&g, &p, Some(&w)) - expected).abs() < 1e-12);
    }

    #[test]
    fn merge_thresholds() {
        let g = barbell();
        let emb = embed_graph(&g, &EmbeddingConfig::default()).unwrap();
        let p = initialize_singletons(&g).unwrap();
        let none = propose_merges(&g, &emb, &p, 1.0).unwrap();
        assert_eq!(none.len(), 6);
        let all = propose_merges(&g, &emb, &p, -1.0).unwrap();
        assert_eq!(all.len(), 1);
    }

    #[test]
    fn merge_respects_components() {
        let g = KnowledgeGraph::from_triples([("a", "r", "b"), ("c", "r", "d"), ("d", "r", "e")]);
        let emb = embed_graph(&g, &EmbeddingConfig::default()).unwrap();
        let p = initialize_singletons(&g).unwrap();
        let merged = propose_merges(&g, &emb, &p, -1.0).unwrap();
        assert_eq!(merged.len(), 2);
        assert_eq!(merged.communities()[0].len(), 2);
        assert_eq!(merged.communities()[1].len(), 3);
    }

    #[test]
    fn louvain_keeps_optimum() {
        let g = barbell();
        let p = CommunityPartition::from_labels(&[0, 0, 0, 1, 1, 1], 0.0);
        let out = louvain_optimize(&g, &p, &PartitionConfig::default(), None);
        assert_eq!(out.assignment(), p.assignment());
        assert!((out.modularity - 2.0 * (3.0 / 7.0 - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn louvain_two_triangles() {
        let g = KnowledgeGraph::from_triples([
            ("a", "r", "b"),
            ("b", "r", "c"),
            ("c", "r", "a"),
            ("x", "r", "y"),
            ("y", "r", "z"),
            ("z", "r", "x"),
        ]);
        let p = initialize_singletons(&g).unwrap();
        let out = louvain_optimize(&g, &p, &PartitionConfig::default(), None);
        assert_eq!(out.len(), 2);
        assert!((out.modularity - 0.5).abs() < 1e-12);
    }

    #[test]
    fn louvain_never_decreases_from_start() {
        let g = barbell();
        // deliberately poor start: bridge endpoints together, cliques split
        let p = CommunityPartition::from_labels(&[0, 1, 2, 2, 3, 4], 0.0);
        let q0 = modularity(&g, &p, None);
        let out = louvain_optimize(&g, &p, &PartitionConfig::default(), None);
        assert!(out.modularity >= q0);
        assert!(out.is_valid_for(6));
    }

    #[test]
    fn small_communities_absorbed() {
        // triangle plus a pendant pair hanging off it
        let g = KnowledgeGraph::from_triples([
            ("a", "r", "b"),
            ("b", "r", "c"),
            ("c", "r", "a"),
            ("c", "r", "d"),
            ("d", "r", "e"),
        ]);
        let emb = embed_graph(&g, &EmbeddingConfig::default()).unwrap();
        let p = CommunityPartition::from_labels(&[0, 0, 0, 1, 1], 0.0);
        let out = absorb_small(&g, &emb, p, 3);
        assert_eq!(out.len(), 1);
        assert!(out.is_valid_for(5));

        // an isolated pair has nowhere to go
        let g2 = KnowledgeGraph::from_triples([("a", "r", "b"), ("b", "r", "c"), ("c", "r", "a"), ("x", "r", "y")]);
        let emb2 = embed_graph(&g2, &EmbeddingConfig::default()).unwrap();
        let p2 = CommunityPartition::from_labels(&[0, 0, 0, 1, 1], 0.0);
        assert_eq!(absorb_small(&g2, &emb2, p2, 3).len(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(PartitionConfig { theta: 1.5, ..Default::default() }.validate().is_err());
        assert!(PartitionConfig { max_passes: 0, ..Default::default() }.validate().is_err());
        assert!(PartitionConfig::default().validate().is_ok());
    }

    #[test]
    fn partition_file_roundtrip() {
        let g = barbell();
        let emb = embed_graph(&g, &EmbeddingConfig::default()).unwrap();
        let p = partition_graph(&g, &emb, &PartitionConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partition.jsonl");
        write_partition(&path, &g, &p).unwrap();
        let back = read_partition(&path, &g).unwrap();
        assert_eq!(back, p);
        let lines = std::fs::read_to_string(&path).unwrap();
        assert_eq!(lines.lines().count(), 7);
        assert!(lines.lines().last().unwrap().contains("\"kind\":\"summary\""));
    }
}
