//! Adaptive relation-guided walks.
//!
//! A walk starts at a seed entity inside one community and takes up to `T`
//! steps. At every step the candidate `(relation, neighbor)` pairs of the
//! current entity are scored as
//!
//! ```text
//! weight = alpha * cos(current, neighbor)
//!        + beta / log2(2 + degree(neighbor))
//!        - gamma * [neighbor already visited]
//! ```
//!
//! and the best candidate that does not repeat an earlier `(relation, next)`
//! pair is taken. Triples are traversable from either endpoint. A dead end
//! backtracks one step; if that also fails the plan ends early. After each
//! step, entities similar to the new entity that are directly connected to
//! it are attached as expansions of that step.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::community::CommunityPartition;
use crate::embedding::Embeddings;
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};

/// Plans shorter than `T` are kept only if they reach this many steps.
pub const MIN_PLAN_STEPS: usize = 3;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("invalid walk config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    HighestDegree,
    RandomSeeded,
}

/// How the next entity is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkStrategy {
    /// Weighted selection with pruning and expansion.
    Adaptive,
    /// Uniform choice among unvisited neighbors; no expansion.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    /// Number of turns `T`.
    pub turns: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Cosine threshold for similar-entity expansion.
    pub sigma: f64,
    pub max_expansions: usize,
    pub seed_policy: SeedPolicy,
    pub strategy: WalkStrategy,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            turns: 8,
            alpha: 1.0,
            beta: 0.5,
            gamma: 0.75,
            sigma: 0.7,
            max_expansions: 2,
            seed_policy: SeedPolicy::HighestDegree,
            strategy: WalkStrategy::Adaptive,
            seed: 11,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), WalkError> {
        let bad = |m: &str| Err(WalkError::InvalidConfig(m.to_owned()));
        if self.turns < 1 {
            return bad("turns must be >= 1");
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return bad("alpha, beta and gamma must be non-negative");
        }
        if self.alpha + self.beta <= 0.0 {
            return bad("alpha + beta must be positive");
        }
        if !(-1.0..=1.0).contains(&self.sigma) {
            return bad("sigma must lie in [-1, 1]");
        }
        Ok(())
    }
}

/// Set of entities a walk may visit, tagged with its community index.
#[derive(Debug, Clone)]
pub struct WalkScope {
    pub community: usize,
    members: Vec<bool>,
    entities: Vec<EntityId>,
}

impl WalkScope {
    pub fn new(g: &KnowledgeGraph, community: usize, entities: &[EntityId]) -> Self {
        let mut members = vec![false; g.entity_count()];
        for e in entities {
            members[e.index()] = true;
        }
        let mut entities = entities.to_vec();
        entities.sort_unstable();
        Self {
            community,
            members,
            entities,
        }
    }

    /// The whole graph as a single scope with community index 0.
    pub fn whole_graph(g: &KnowledgeGraph) -> Self {
        let all: Vec<EntityId> = g.entities().collect();
        Self::new(g, 0, &all)
    }

    pub fn from_partition(g: &KnowledgeGraph, p: &CommunityPartition) -> Vec<Self> {
        p.communities()
            .iter()
            .enumerate()
            .map(|(c, members)| Self::new(g, c, members))
            .collect()
    }

    pub fn contains(&self, e: EntityId) -> bool {
        self.members.get(e.index()).copied().unwrap_or(false)
    }

    pub fn entities(&self) -> &[EntityId] {
        &self.entities
    }

    pub fn contains_triple(&self, t: &Triple) -> bool {
        self.contains(t.head) && self.contains(t.tail)
    }

    /// Incident triples of `e` that lie inside the scope.
    pub fn degree(&self, g: &KnowledgeGraph, e: EntityId) -> usize {
        g.incident_triples(e)
            .filter(|t| self.contains_triple(t))
            .count()
    }
}

/// A related entity attached to a step, with the triple linking it to the
/// step's `next` entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub entity: EntityId,
    pub relation: RelationId,
    pub triple: Triple,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkStep {
    pub turn: usize,
    pub current: EntityId,
    pub relation: RelationId,
    pub next: EntityId,
    /// The graph triple traversed, in its stored orientation.
    pub triple: Triple,
    pub expansions: Vec<Expansion>,
    pub weight: f64,
}

impl WalkStep {
    pub fn tuple(&self) -> (EntityId, RelationId, EntityId) {
        (self.current, self.relation, self.next)
    }

    /// The traversed triple plus every expansion triple.
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        std::iter::once(self.triple).chain(self.expansions.iter().map(|x| x.triple))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkPlan {
    pub community: usize,
    pub walk_index: usize,
    pub seed_entity: EntityId,
    pub steps: Vec<WalkStep>,
    /// Walked entities in first-visit order, seed first.
    pub visited: Vec<EntityId>,
    /// Set when the plan stopped before reaching `T` steps.
    pub terminated_early: bool,
    /// Tuples given up by backtracking; never retried.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub abandoned: BTreeSet<(EntityId, RelationId, EntityId)>,
}

impl WalkPlan {
    pub fn new(community: usize, walk_index: usize, seed_entity: EntityId) -> Self {
        Self {
            community,
            walk_index,
            seed_entity,
            steps: Vec::new(),
            visited: vec![seed_entity],
            terminated_early: false,
            abandoned: BTreeSet::new(),
        }
    }

    pub fn current(&self) -> EntityId {
        self.steps.last().map_or(self.seed_entity, |s| s.next)
    }

    fn rebuild_visited(&mut self) {
        let mut seen = BTreeSet::new();
        self.visited.clear();
        for e in std::iter::once(self.seed_entity).chain(self.steps.iter().map(|s| s.next)) {
            if seen.insert(e) {
                self.visited.push(e);
            }
        }
    }

    fn uses_pair(&self, relation: RelationId, next: EntityId) -> bool {
        self.steps
            .iter()
            .any(|s| s.relation == relation && s.next == next)
    }

    /// Every entity the plan touches: walked entities plus expansions.
    pub fn entities(&self) -> BTreeSet<EntityId> {
        let mut out: BTreeSet<EntityId> = self.visited.iter().copied().collect();
        for s in &self.steps {
            out.extend(s.expansions.iter().map(|x| x.entity));
        }
        out
    }

    /// Stable dialogue id derived from the plan's position.
    pub fn id(&self) -> String {
        format!("c{:04}-w{:03}", self.community, self.walk_index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub relation: RelationId,
    pub entity: EntityId,
    pub triple: Triple,
    pub weight: f64,
}

/// In-scope `(relation, neighbor)` pairs of `current`, excluding self-loops,
/// deduplicated on the pair.
fn candidates(g: &KnowledgeGraph, scope: &WalkScope, current: EntityId) -> Vec<(RelationId, EntityId, Triple)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for t in g.incident_triples(current) {
        if t.is_self_loop() {
            continue;
        }
        let other = t.other(current).expect("incident triple");
        if scope.contains(other) && seen.insert((t.relation, other)) {
            out.push((t.relation, other, t));
        }
    }
    out.sort_by_key(|&(r, e, _)| (r, e));
    out
}

/// Ranks the candidates of `current` by adjusted weight, descending; ties by
/// `(relation id, entity id)`. An empty result signals a dead end.
pub fn score_relations(
    g: &KnowledgeGraph,
    emb: &Embeddings,
    scope: &WalkScope,
    current: EntityId,
    visited: &BTreeSet<EntityId>,
    cfg: &WalkConfig,
) -> Vec<ScoredCandidate> {
    let mut scored: Vec<ScoredCandidate> = candidates(g, scope, current)
        .into_iter()
        .map(|(relation, entity, triple)| {
            let semantic = emb.similarity(current, entity);
            let structural = 1.0 / (2.0 + scope.degree(g, entity) as f64).log2();
            let penalty = if visited.contains(&entity) { 1.0 } else { 0.0 };
            ScoredCandidate {
                relation,
                entity,
                triple,
                weight: cfg.alpha * semantic + cfg.beta * structural - cfg.gamma * penalty,
            }
        })
        .collect();
    scored.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then((a.relation, a.entity).cmp(&(b.relation, b.entity)))
    });
    scored
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Stepped,
    /// No step could be taken, even after backtracking; the plan is marked
    /// terminated.
    DeadEnd,
}

fn rank(
    g: &KnowledgeGraph,
    emb: &Embeddings,
    scope: &WalkScope,
    plan: &WalkPlan,
    from: EntityId,
    cfg: &WalkConfig,
    rng: &mut ChaCha8Rng,
) -> Option<ScoredCandidate> {
    let eligible = |c: &ScoredCandidate| {
        !plan.uses_pair(c.relation, c.entity) && !plan.abandoned.contains(&(from, c.relation, c.entity))
    };
    match cfg.strategy {
        WalkStrategy::Adaptive => {
            let visited: BTreeSet<EntityId> = plan.visited.iter().copied().collect();
            score_relations(g, emb, scope, from, &visited, cfg)
                .into_iter()
                .find(eligible)
        }
        WalkStrategy::UniformRandom => {
            let pool: Vec<ScoredCandidate> = candidates(g, scope, from)
                .into_iter()
                .filter(|(_, e, _)| !plan.visited.contains(e))
                .map(|(relation, entity, triple)| ScoredCandidate {
                    relation,
                    entity,
                    triple,
                    weight: 0.0,
                })
                .filter(eligible)
                .collect();
            let n = pool.len();
            pool.choose(rng).cloned().map(|mut c| {
                c.weight = 1.0 / n as f64;
                c
            })
        }
    }
}

fn push_step(plan: &mut WalkPlan, from: EntityId, c: ScoredCandidate) {
    plan.steps.push(WalkStep {
        turn: plan.steps.len() + 1,
        current: from,
        relation: c.relation,
        next: c.entity,
        triple: c.triple,
        expansions: Vec::new(),
        weight: c.weight,
    });
    plan.rebuild_visited();
}

/// Appends one step. On a dead end the last step is replaced by the next
/// eligible candidate of its origin; if there is none, the plan is marked
/// terminated and left unchanged.
pub fn step_walk(
    g: &KnowledgeGraph,
    emb: &Embeddings,
    scope: &WalkScope,
    plan: &mut WalkPlan,
    cfg: &WalkConfig,
    rng: &mut ChaCha8Rng,
) -> StepOutcome {
    if plan.terminated_early {
        return StepOutcome::DeadEnd;
    }
    let from = plan.current();
    if let Some(c) = rank(g, emb, scope, plan, from, cfg, rng) {
        push_step(plan, from, c);
        return StepOutcome::Stepped;
    }

    if let Some(last) = plan.steps.pop() {
        plan.rebuild_visited();
        plan.abandoned.insert(last.tuple());
        if let Some(c) = rank(g, emb, scope, plan, last.current, cfg, rng) {
            push_step(plan, last.current, c);
            return StepOutcome::Stepped;
        }
        plan.abandoned.remove(&last.tuple());
        plan.steps.push(last);
        plan.rebuild_visited();
    }
    plan.terminated_early = true;
    StepOutcome::DeadEnd
}

/// Truncates the plan at the first step whose `(relation, next)` pair
/// repeats an earlier step's pair.
pub fn prune_redundant(mut plan: WalkPlan) -> WalkPlan {
    let mut seen = BTreeSet::new();
    let cut = plan
        .steps
        .iter()
        .position(|s| !seen.insert((s.relation, s.next)));
    if let Some(cut) = cut {
        plan.steps.truncate(cut);
        plan.rebuild_visited();
    }
    plan
}

/// Attaches up to `max_expansions` scope entities whose cosine to
/// `step.next` is at least `sigma` and which share a triple with it.
/// The step's own endpoints and anything in `known` are never expansions.
pub fn expand_similar(
    g: &KnowledgeGraph,
    emb: &Embeddings,
    scope: &WalkScope,
    mut step: WalkStep,
    known: &BTreeSet<EntityId>,
    cfg: &WalkConfig,
) -> WalkStep {
    step.expansions.clear();
    if cfg.max_expansions == 0 {
        return step;
    }
    let mut similar: Vec<(f64, EntityId)> = scope
        .entities()
        .iter()
        .filter(|&&e| e != step.next && e != step.current && !known.contains(&e))
        .map(|&e| (emb.similarity(step.next, e), e))
        .filter(|(s, _)| *s >= cfg.sigma)
        .collect();
    similar.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    for (similarity, entity) in similar {
        if step.expansions.len() == cfg.max_expansions {
            break;
        }
        let link = g
            .incident_triples(step.next)
            .filter(|t| t.other(step.next) == Some(entity))
            .min_by_key(|t| (t.relation, t.head, t.tail));
        if let Some(triple) = link {
            step.expansions.push(Expansion {
                entity,
                relation: triple.relation,
                triple,
                similarity,
            });
        }
    }
    step
}

fn seed_for(
    g: &KnowledgeGraph,
    scope: &WalkScope,
    walk_index: usize,
    cfg: &WalkConfig,
    rng: &mut ChaCha8Rng,
) -> EntityId {
    match cfg.seed_policy {
        SeedPolicy::HighestDegree => {
            let mut ranked: Vec<(usize, EntityId)> = scope
                .entities()
                .iter()
                .map(|&e| (scope.degree(g, e), e))
                .collect();
            ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            ranked[walk_index % ranked.len()].1
        }
        SeedPolicy::RandomSeeded => scope.entities()[rng.gen_range(0..scope.entities().len())],
    }
}

fn plan_rng(cfg: &WalkConfig, community: usize, walk_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(((community as u64) << 20) | walk_index as u64);
    rng
}

/// Builds one plan inside `scope`. Returns `None` when the walk is too
/// short to keep.
pub fn plan_walk(
    g: &KnowledgeGraph,
    emb: &Embeddings,
    scope: &WalkScope,
    walk_index: usize,
    cfg: &WalkConfig,
) -> Option<WalkPlan> {
    let mut rng = plan_rng(cfg, scope.community, walk_index);
    let seed = seed_for(g, scope, walk_index, cfg, &mut rng);
    let mut plan = WalkPlan::new(scope.community, walk_index, seed);
    // every backtrack abandons a distinct tuple, so this bound is never the
    // reason a healthy walk stops
    let budget = cfg.turns + 2 * g.triple_count() + 1;
    for _ in 0..budget {
        if plan.steps.len() >= cfg.turns {
            break;
        }
        if step_walk(g, emb, scope, &mut plan, cfg, &mut rng) == StepOutcome::DeadEnd {
            break;
        }
        if cfg.strategy == WalkStrategy::Adaptive {
            let last = plan.steps.pop().expect("a step was just taken");
            let known = plan.entities();
            plan.steps.push(expand_similar(g, emb, scope, last, &known, cfg));
            plan = prune_redundant(plan);
        }
    }
    if plan.steps.len() < cfg.turns {
        plan.terminated_early = true;
    }
    if plan.steps.len() == cfg.turns || plan.steps.len() >= MIN_PLAN_STEPS {
        Some(plan)
    } else {
        None
    }
}

/// Plans `walks_per_scope` walks in every scope with at least two entities.
pub fn plan_walks_in_scopes(
    g: &KnowledgeGraph,
    emb: &Embeddings,
    scopes: &[WalkScope],
    cfg: &WalkConfig,
    walks_per_scope: usize,
) -> Result<Vec<WalkPlan>, WalkError> {
    cfg.validate()?;
    let plans: Vec<Vec<WalkPlan>> = scopes
        .par_iter()
        .filter(|s| s.entities().len() >= 2)
        .map(|scope| {
            (0..walks_per_scope)
                .filter_map(|w| plan_walk(g, emb, scope, w, cfg))
                .collect()
        })
        .collect();
    Ok(plans.into_iter().flatten().collect())
}

/// Plans walks inside each community of `partition`.
pub fn plan_walks(
    g: &KnowledgeGraph,
    emb: &Embeddings,
    partition: &CommunityPartition,
    cfg: &WalkConfig,
    walks_per_community: usize,
) -> Result<Vec<WalkPlan>, WalkError> {
    let scopes = WalkScope::from_partition(g, partition);
    plan_walks_in_scopes(g, emb, &scopes, cfg, walks_per_community)
}

/// Human-readable audit view of a plan, written next to the plan itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkRecord {
    pub id: String,
    pub seed: String,
    pub path: Vec<String>,
    pub plan: WalkPlan,
}

impl WalkRecord {
    pub fn new(g: &KnowledgeGraph, plan: &WalkPlan) -> Self {
        let path = plan
            .steps
            .iter()
            .map(|s| {
                let (h, r, t) = g.triple_labels(&s.triple);
                let mut line = format!("{h} —{r}→ {t}");
                for x in &s.expansions {
                    line.push_str(&format!(" (related: {})", g.entity_label(x.entity)));
                }
                line
            })
            .collect();
        Self {
            id: plan.id(),
            seed: g.entity_label(plan.seed_entity).to_owned(),
            path,
            plan: plan.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{embed_graph, EmbeddingConfig};

    fn setup(triples: &[(&str, &str, &str)]) -> (KnowledgeGraph, Embeddings, WalkScope) {
        let g = KnowledgeGraph::from_triples(triples.iter().copied());
        let emb = embed_graph(&g, &EmbeddingConfig::default()).unwrap();
        let scope = WalkScope::whole_graph(&g);
        (g, emb, scope)
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn linear_path_two_steps() {
        let (g, emb, scope) = setup(&[("a", "r", "b"), ("b", "s", "c")]);
        let cfg = WalkConfig {
            turns: 2,
            ..Default::default()
        };
        let a = g.entity_id("a").unwrap();
        let mut plan = WalkPlan::new(0, 0, a);
        let mut r = rng();
        assert_eq!(step_walk(&g, &emb, &scope, &mut plan, &cfg, &mut r), StepOutcome::Stepped);
        assert_eq!(step_walk(&g, &emb, &scope, &mut plan, &cfg, &mut r), StepOutcome::Stepped);
        let labels: Vec<(&str, &str)> = plan
            .steps
            .iter()
            .map(|s| (g.entity_label(s.current), g.entity_label(s.next)))
            .collect();
        assert_eq!(labels, vec![("a", "b"), ("b", "c")]);
        assert_eq!(plan.visited.len(), 3);
    }

    #[test]
    fn self_loop_only_is_a_dead_end() {
        let (g, emb, scope) = setup(&[("a", "r", "a")]);
        let a = g.entity_id("a").unwrap();
        let mut plan = WalkPlan::new(0, 0, a);
        let out = step_walk(&g, &emb, &scope, &mut plan, &WalkConfig::default(), &mut rng());
        assert_eq!(out, StepOutcome::DeadEnd);
        assert!(plan.steps.is_empty());
        assert!(plan.terminated_early);
    }

    #[test]
    fn huge_gamma_puts_unvisited_first() {
        let (g, emb, scope) = setup(&[("a", "r", "b"), ("a", "r", "c"), ("a", "r", "d"), ("b", "r", "d")]);
        let a = g.entity_id("a").unwrap();
        let b = g.entity_id("b").unwrap();
        let cfg = WalkConfig {
            gamma: 1e6,
            ..Default::default()
        };
        let visited: BTreeSet<_> = [a, b].into_iter().collect();
        let ranked = score_relations(&g, &emb, &scope, a, &visited, &cfg);
        assert_eq!(ranked.len(), 3);
        assert_eq!(ranked.last().unwrap().entity, b);
    }

    #[test]
    fn structural_term_alone_prefers_low_degree() {
        let (g, emb, scope) = setup(&[
            ("a", "r", "hub"),
            ("a", "r", "leaf"),
            ("hub", "r", "x"),
            ("hub", "r", "y"),
        ]);
        let a = g.entity_id("a").unwrap();
        let cfg = WalkConfig {
            alpha: 0.0,
            beta: 1.0,
            ..Default::default()
        };
        let ranked = score_relations(&g, &emb, &scope, a, &BTreeSet::new(), &cfg);
        assert_eq!(g.entity_label(ranked[0].entity), "leaf");
        assert!((ranked[0].weight - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((ranked[1].weight - 1.0 / 5f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn backtracks_one_level() {
        // a-b is a dead end once b is reached (b's only edge is back to a
        // via the same pair); backtracking from a takes a-c instead
        let (g, emb, scope) = setup(&[("a", "r", "b"), ("a", "s", "c"), ("c", "s", "d")]);
        let a = g.entity_id("a").unwrap();
        let cfg = WalkConfig {
            alpha: 0.0,
            beta: 1.0,
            gamma: 0.0,
            ..Default::default()
        };
        let mut plan = WalkPlan::new(0, 0, a);
        let mut r = rng();
        // force the first step to b
        let b = g.entity_id("b").unwrap();
        push_step(
            &mut plan,
            a,
            ScoredCandidate {
                relation: g.relation_id("r").unwrap(),
                entity: b,
                triple: g.triples()[0],
                weight: 0.0,
            },
        );
        // from b the only pair is (r, a), which is fine; then from a the
        // pair (r, b) is used, so (s, c) follows
        assert_eq!(step_walk(&g, &emb, &scope, &mut plan, &cfg, &mut r), StepOutcome::Stepped);
        assert_eq!(g.entity_label(plan.current()), "a");
        assert_eq!(step_walk(&g, &emb, &scope, &mut plan, &cfg, &mut r), StepOutcome::Stepped);
        assert_eq!(g.entity_label(plan.current()), "c");
    }

    #[test]
    fn dead_end_replaces_last_step() {
        // from seed x: only neighbor y (pair r,y). From y: back to x is pair
        // (r, x), then from x again (r, y) is used -> dead end at x.
        // Backtracking pops x<-y and looks for another candidate from y: none.
        let (g, emb, scope) = setup(&[("x", "r", "y")]);
        let x = g.entity_id("x").unwrap();
        let cfg = WalkConfig::default();
        let mut plan = WalkPlan::new(0, 0, x);
        let mut r = rng();
        assert_eq!(step_walk(&g, &emb, &scope, &mut plan, &cfg, &mut r), StepOutcome::Stepped);
        assert_eq!(step_walk(&g, &emb, &scope, &mut plan, &cfg, &mut r), StepOutcome::Stepped);
        assert_eq!(step_walk(&g, &emb, &scope, &mut plan, &cfg, &mut r), StepOutcome::DeadEnd);
        assert_eq!(plan.steps.len(), 2);
        assert!(plan.terminated_early);
    }

    fn step(turn: usize, current: u32, relation: u32, next: u32) -> WalkStep {
        WalkStep {
            turn,
            current: EntityId(current),
            relation: RelationId(relation),
            next: EntityId(next),
            triple: Triple::new(EntityId(current), RelationId(relation), EntityId(next)),
            expansions: vec![],
            weight: 0.0,
        }
    }

    #[test]
    fn prune_examples() {
        let mut plan = WalkPlan::new(0, 0, EntityId(0));
        plan.steps = vec![step(1, 0, 0, 1), step(2, 1, 0, 2), step(3, 2, 1, 3)];
        plan.rebuild_visited();
        assert_eq!(prune_redundant(plan.clone()), plan);

        let mut dup_last = plan.clone();
        dup_last.steps.push(step(4, 3, 0, 1));
        assert_eq!(prune_redundant(dup_last).steps.len(), 3);

        let mut five = plan.clone();
        five.steps.push(step(4, 3, 0, 2));
        five.steps.push(step(5, 2, 1, 3));
        let pruned = prune_redundant(five);
        assert_eq!(pruned.steps.len(), 3);
        assert_eq!(pruned.visited.len(), 4);
    }

    #[test]
    fn expansion_limits() {
        let (g, emb, scope) = setup(&[("a", "r", "b"), ("b", "r", "c"), ("b", "r", "d"), ("c", "r", "d")]);
        let a = g.entity_id("a").unwrap();
        let b = g.entity_id("b").unwrap();
        let s = WalkStep {
            turn: 1,
            current: a,
            relation: RelationId(0),
            next: b,
            triple: g.triples()[0],
            expansions: vec![],
            weight: 0.0,
        };
        let strict = WalkConfig {
            sigma: 1.0,
            ..Default::default()
        };
        assert!(expand_similar(&g, &emb, &scope, s.clone(), &BTreeSet::new(), &strict).expansions.is_empty());
        let none = WalkConfig {
            sigma: -1.0,
            max_expansions: 0,
            ..Default::default()
        };
        assert!(expand_similar(&g, &emb, &scope, s.clone(), &BTreeSet::new(), &none).expansions.is_empty());
        let all = WalkConfig {
            sigma: -1.0,
            max_expansions: 5,
            ..Default::default()
        };
        let out = expand_similar(&g, &emb, &scope, s.clone(), &BTreeSet::new(), &all);
        let mut got: Vec<&str> = out.expansions.iter().map(|x| g.entity_label(x.entity)).collect();
        got.sort();
        assert_eq!(got, vec!["c", "d"]);
        assert!(out.expansions.iter().all(|x| x.entity != b && x.entity != a));
        let c = g.entity_id("c").unwrap();
        let skip_c = expand_similar(&g, &emb, &scope, s, &[c].into_iter().collect(), &all);
        assert_eq!(skip_c.expansions.len(), 1);
        assert_eq!(g.entity_label(skip_c.expansions[0].entity), "d");
    }

    #[test]
    fn config_validation() {
        assert!(WalkConfig {
            alpha: 0.0,
            beta: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(WalkConfig {
            gamma: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(WalkConfig {
            sigma: 2.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn plan_id_format() {
        assert_eq!(WalkPlan::new(3, 7, EntityId(0)).id(), "c0003-w007");
    }
}
