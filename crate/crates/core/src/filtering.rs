//! Redundancy filtering: text-embedding cosine and subgraph Jaccard.
//!
//! Both stages share one greedy resolution pass. Dialogues are scanned in id
//! order against the set kept so far. A dialogue that conflicts with kept
//! ones replaces them only if it beats every one of them under the keep
//! policy; otherwise it is dropped. The kept set therefore never contains a
//! conflicting pair, which makes a second pass a no-op.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::Dialogue;
use crate::embedding::{embed_text, TextEmbedding};
use crate::jsonl::{write_jsonl, JsonlError};
use crate::kg::{jaccard_similarity, KgError, Triple};

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("invalid filter config: {0}")]
    InvalidConfig(String),
    #[error("dialogue {id}: {source}")]
    Subgraph {
        id: String,
        #[source]
        source: KgError,
    },
    #[error(transparent)]
    Io(#[from] JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeepPolicy {
    /// More distinct key entities wins; ties go to the earlier id.
    MoreEntitiesThenEarlier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterOrder {
    SemanticFirst,
    SubgraphFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub semantic_threshold: f64,
    pub jaccard_threshold: f64,
    pub keep_policy: KeepPolicy,
    pub order: FilterOrder,
    /// Width of the hashed text vectors.
    pub text_dimension: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            semantic_threshold: 0.92,
            jaccard_threshold: 0.5,
            keep_policy: KeepPolicy::MoreEntitiesThenEarlier,
            order: FilterOrder::SemanticFirst,
            text_dimension: 512,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        for (name, v) in [
            ("semantic_threshold", self.semantic_threshold),
            ("jaccard_threshold", self.jaccard_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(FilterError::InvalidConfig(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.text_dimension < 2 {
            return Err(FilterError::InvalidConfig("text_dimension must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Semantic,
    Subgraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub removed: String,
    pub kept: String,
    pub similarity: f64,
}

/// A dialogue that could not be compared and was kept as-is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flag {
    pub id: String,
    pub stage: Stage,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input_count: usize,
    pub kept_count: usize,
    pub removed_semantic: Vec<Removal>,
    pub removed_jaccard: Vec<Removal>,
    pub flagged: Vec<Flag>,
}

impl FilterReport {
    pub fn removed_count(&self) -> usize {
        self.removed_semantic.len() + self.removed_jaccard.len()
    }

    /// Writes one record per removal and flag, then a summary line.
    pub fn write_audit(&self, path: &Path) -> Result<(), FilterError> {
        let mut records = Vec::new();
        for (stage, list) in [(Stage::Semantic, &self.removed_semantic), (Stage::Subgraph, &self.removed_jaccard)] {
            records.extend(list.iter().map(|r| AuditRecord::Removal {
                stage,
                removed: r.removed.clone(),
                kept: r.kept.clone(),
                similarity: r.similarity,
            }));
        }
        records.extend(self.flagged.iter().map(|f| AuditRecord::Flag(f.clone())));
        records.push(AuditRecord::Summary {
            input_count: self.input_count,
            kept_count: self.kept_count,
        });
        write_jsonl(path, &records)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuditRecord {
    Removal {
        stage: Stage,
        removed: String,
        kept: String,
        similarity: f64,
    },
    Flag(Flag),
    Summary {
        input_count: usize,
        kept_count: usize,
    },
}

/// Whether `a` survives against `b`.
fn beats(policy: KeepPolicy, a: &Dialogue, b: &Dialogue) -> bool {
    match policy {
        KeepPolicy::MoreEntitiesThenEarlier => {
            let (ea, eb) = (a.key_entity_count(), b.key_entity_count());
            ea > eb || (ea == eb && a.id < b.id)
        }
    }
}

/// Greedy resolution shared by both stages. `conflicts(i, kept)` returns the
/// kept indices whose similarity to `i` exceeds the threshold, with that
/// similarity. Indices in `skip` are kept without comparison.
fn resolve<F>(
    dialogues: &[Dialogue],
    policy: KeepPolicy,
    skip: &BTreeSet<usize>,
    conflicts: F,
) -> (Vec<bool>, Vec<Removal>)
where
    F: Fn(usize, &[usize]) -> Vec<(usize, f64)>,
{
    let mut order: Vec<usize> = (0..dialogues.len()).collect();
    order.sort_by(|&a, &b| dialogues[a].id.cmp(&dialogues[b].id).then(a.cmp(&b)));

    let mut keep = vec![false; dialogues.len()];
    let mut kept: Vec<usize> = Vec::new();
    let mut removals = Vec::new();
    for i in order {
        if skip.contains(&i) {
            keep[i] = true;
            continue;
        }
        let hits = conflicts(i, &kept);
        if hits.is_empty() {
            keep[i] = true;
            kept.push(i);
            continue;
        }
        let d = &dialogues[i];
        if hits.iter().all(|&(k, _)| beats(policy, d, &dialogues[k])) {
            for &(k, sim) in &hits {
                keep[k] = false;
                removals.push(Removal {
                    removed: dialogues[k].id.clone(),
                    kept: d.id.clone(),
                    similarity: sim,
                });
            }
            kept.retain(|k| !hits.iter().any(|&(h, _)| h == *k));
            keep[i] = true;
            kept.push(i);
        } else {
            let (k, sim) = hits
                .iter()
                .copied()
                .filter(|&(k, _)| !beats(policy, d, &dialogues[k]))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                .expect("some kept dialogue wins");
            removals.push(Removal {
                removed: d.id.clone(),
                kept: dialogues[k].id.clone(),
                similarity: sim,
            });
        }
    }
    (keep, removals)
}

fn select(dialogues: Vec<Dialogue>, keep: &[bool]) -> Vec<Dialogue> {
    dialogues
        .into_iter()
        .zip(keep)
        .filter_map(|(d, &k)| k.then_some(d))
        .collect()
}

/// Removes dialogues whose text embedding has cosine above `threshold` with
/// an already kept dialogue.
pub fn semantic_filter<F>(
    dialogues: Vec<Dialogue>,
    embed_fn: F,
    threshold: f64,
    policy: KeepPolicy,
) -> (Vec<Dialogue>, FilterReport)
where
    F: Fn(&Dialogue) -> TextEmbedding + Sync,
{
    let vectors: Vec<TextEmbedding> = dialogues.par_iter().map(&embed_fn).collect();
    let mut flagged = Vec::new();
    let mut skip = BTreeSet::new();
    for (i, v) in vectors.iter().enumerate() {
        if !v.embeddable {
            skip.insert(i);
            flagged.push(Flag {
                id: dialogues[i].id.clone(),
                stage: Stage::Semantic,
                reason: "unembeddable".into(),
            });
        }
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (keep, removals) = resolve(&dialogues, policy, &skip, |i, kept| {
        kept.par_iter()
            .filter(|k| !skip.contains(k))
            .filter_map(|&k| {
                let s = dot(&vectors[i].vector, &vectors[k].vector);
                (s > threshold).then_some((k, s))
            })
            .collect()
    });
    let input_count = dialogues.len();
    let kept = select(dialogues, &keep);
    let report = FilterReport {
        input_count,
        kept_count: kept.len(),
        removed_semantic: removals,
        removed_jaccard: Vec::new(),
        flagged,
    };
    (kept, report)
}

/// Removes dialogues whose subgraph Jaccard index exceeds `threshold` with
/// an already kept dialogue. Only pairs sharing a triple are compared;
/// pairs sharing none score 0 and cannot exceed a threshold in `[0, 1]`.
pub fn subgraph_filter(
    dialogues: Vec<Dialogue>,
    threshold: f64,
    policy: KeepPolicy,
) -> Result<(Vec<Dialogue>, FilterReport), FilterError> {
    let mut flagged = Vec::new();
    let mut skip = BTreeSet::new();
    let mut by_triple: HashMap<Triple, Vec<usize>> = HashMap::new();
    for (i, d) in dialogues.iter().enumerate() {
        if d.subgraph.is_empty() {
            skip.insert(i);
            flagged.push(Flag {
                id: d.id.clone(),
                stage: Stage::Subgraph,
                reason: "empty subgraph".into(),
            });
            continue;
        }
        for t in d.subgraph.triples() {
            by_triple.entry(*t).or_default().push(i);
        }
    }
    let mut sims: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut pairs = BTreeSet::new();
    for members in by_triple.values() {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                pairs.insert((i.min(j), i.max(j)));
            }
        }
    }
    let computed: Vec<((usize, usize), Result<f64, KgError>)> = pairs
        .into_par_iter()
        .map(|(i, j)| ((i, j), jaccard_similarity(&dialogues[i].subgraph, &dialogues[j].subgraph)))
        .collect();
    for ((i, j), s) in computed {
        let s = s.map_err(|source| FilterError::Subgraph {
            id: dialogues[j].id.clone(),
            source,
        })?;
        sims.insert((i, j), s);
    }

    let (keep, removals) = resolve(&dialogues, policy, &skip, |i, kept| {
        kept.iter()
            .filter_map(|&k| {
                let s = *sims.get(&(i.min(k), i.max(k)))?;
                (s > threshold).then_some((k, s))
            })
            .collect()
    });
    let input_count = dialogues.len();
    let kept = select(dialogues, &keep);
    let report = FilterReport {
        input_count,
        kept_count: kept.len(),
        removed_semantic: Vec::new(),
        removed_jaccard: removals,
        flagged,
    };
    Ok((kept, report))
}

/// Both stages in the configured order, with a merged report.
pub fn filter_pipeline(
    dialogues: Vec<Dialogue>,
    cfg: &FilterConfig,
) -> Result<(Vec<Dialogue>, FilterReport), FilterError> {
    cfg.validate()?;
    let input_count = dialogues.len();
    let dim = cfg.text_dimension;
    let semantic = |ds: Vec<Dialogue>| {
        semantic_filter(ds, |d: &Dialogue| embed_text(&d.text(), dim), cfg.semantic_threshold, cfg.keep_policy)
    };
    let (kept, first, second) = match cfg.order {
        FilterOrder::SemanticFirst => {
            let (k, a) = semantic(dialogues);
            let (k, b) = subgraph_filter(k, cfg.jaccard_threshold, cfg.keep_policy)?;
            (k, a, b)
        }
        FilterOrder::SubgraphFirst => {
            let (k, a) = subgraph_filter(dialogues, cfg.jaccard_threshold, cfg.keep_policy)?;
            let (k, b) = semantic(k);
            (k, a, b)
        }
    };
    let mut flagged = first.flagged;
    flagged.extend(second.flagged);
    let report = FilterReport {
        input_count,
        kept_count: kept.len(),
        removed_semantic: [first.removed_semantic, second.removed_semantic].concat(),
        removed_jaccard: [first.removed_jaccard, second.removed_jaccard].concat(),
        flagged,
    };
    Ok((kept, report))
}
