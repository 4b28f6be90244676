//! Brute-force oracles shared by the integration and acceptance tests.
//! Nothing here calls into the optimizer code paths it is used to check.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

/// Every set partition of `0..n` as a restricted-growth label vector.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for l in 0..=max + 1 {
            cur.push(l);
            rec(i + 1, n, max.max(l), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut cur = vec![0];
    rec(1, n, 0, &mut cur, &mut out);
    out
}

/// Modularity straight from the adjacency-matrix definition
/// Q = 1/2m Σ_ij [A_ij - k_i k_j / 2m] δ(c_i, c_j).
pub fn matrix_modularity(n: usize, edges: &[(usize, usize)], labels: &[usize]) -> f64 {
    let mut a = vec![vec![0.0f64; n]; n];
    for &(u, v) in edges {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    let k: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Maximum modularity over all set partitions.
pub fn max_modularity(n: usize, edges: &[(usize, usize)]) -> f64 {
    set_partitions(n)
        .iter()
        .map(|p| matrix_modularity(n, edges, p))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut ra: HashMap<usize, u64> = HashMap::new();
    let mut rb: HashMap<usize, u64> = HashMap::new();
    for i in 0..n {
        *table.entry((a[i], b[i])).or_default() += 1;
        *ra.entry(a[i]).or_default() += 1;
        *rb.entry(b[i]).or_default() += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.values().map(|&x| c2(x)).sum();
    let sa: f64 = ra.values().map(|&x| c2(x)).sum();
    let sb: f64 = rb.values().map(|&x| c2(x)).sum();
    let total = c2(n as u64);
    let expected = sa * sb / total;
    let max = (sa + sb) / 2.0;
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Jaccard over string-triple sets, empty/empty = 0.
pub fn set_jaccard(a: &BTreeSet<(String, String, String)>, b: &BTreeSet<(String, String, String)>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Named graphs with at most 8 nodes, as `(name, node count, edges)`.
pub fn small_fixtures() -> Vec<(&'static str, usize, Vec<(usize, usize)>)> {
    vec![
        ("barbell", 6, vec![(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (3, 5), (4, 5)]),
        ("ring4", 4, vec![(0, 1), (1, 2), (2, 3), (3, 0)]),
        ("two_triangles", 6, vec![(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]),
        ("path5", 5, vec![(0, 1), (1, 2), (2, 3), (3, 4)]),
        ("star5", 5, vec![(0, 1), (0, 2), (0, 3), (0, 4)]),
        ("k4", 4, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]),
        ("ring6", 6, (0..6).map(|i| (i, (i + 1) % 6)).collect()),
        ("two_squares", 8, vec![(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4), (3, 4)]),
        (
            "two_k4_bridge",
            8,
            vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3), (4, 5), (4, 6), (4, 7), (5, 6), (5, 7), (6, 7), (3, 4)],
        ),
        ("lollipop", 7, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3), (3, 4), (4, 5), (5, 6)]),
        (
            "triangle_chain",
            8,
            vec![(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3), (5, 6), (6, 7)],
        ),
        ("triangle_pendants", 6, vec![(0, 1), (1, 2), (2, 0), (0, 3), (1, 4), (2, 5)]),
        ("bowtie", 5, vec![(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 2)]),
        ("k33", 6, vec![(0, 3), (0, 4), (0, 5), (1, 3), (1, 4), (1, 5), (2, 3), (2, 4), (2, 5)]),
        ("wheel6", 6, vec![(0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (1, 2), (2, 3), (3, 4), (4, 5), (5, 1)]),
        (
            "cube",
            8,
            vec![(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4), (0, 4), (1, 5), (2, 6), (3, 7)],
        ),
        ("disjoint_pairs", 8, vec![(0, 1), (2, 3), (4, 5), (6, 7)]),
        ("triangle_and_isolates", 5, vec![(0, 1), (1, 2), (2, 0)]),
    ]
}

/// Graphs on which single-level greedy moves tie and Louvain stops at a
/// local optimum: it pairs neighbors, and merging pairs into quads does not
/// change Q, so the 3-3-2 optimum is never reached.
pub fn known_local_optimum_fixtures() -> Vec<(&'static str, usize, Vec<(usize, usize)>, f64)> {
    vec![
        ("path8", 8, (0..7).map(|i| (i, i + 1)).collect(), 0.357142857142857),
        ("ring8", 8, (0..8).map(|i| (i, (i + 1) % 8)).collect(), 0.25),
    ]
}

/// Seeded Erdős–Rényi graphs with 4..=8 nodes and edge probability 0.4.
pub fn random_small_graphs(count: usize, seed: u64) -> Vec<(usize, Vec<(usize, usize)>)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..count {
        let n = rng.gen_range(4..=8);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.4) {
                    edges.push((i, j));
                }
            }
        }
        if !edges.is_empty() {
            out.push((n, edges));
        }
    }
    out
}

pub fn graph_from_edges(n: usize, edges: &[(usize, usize)]) -> kgdial::kg::KnowledgeGraph {
    let mut b = kgdial::kg::GraphBuilder::new();
    for i in 0..n {
        b.entity(&format!("n{i}"));
    }
    for &(u, v) in edges {
        b.triple(&format!("n{u}"), "linked", &format!("n{v}"));
    }
    b.build()
}

pub type LabelTriple = (String, String, String);

use kgdial::dialogue::{generate_dialogue, Dialogue, DialogueTurn, MockProvider, Provenance, ProviderConfig};
use kgdial::kg::{KnowledgeGraph, Triple};
use kgdial::walker::{WalkPlan, WalkStep};

pub fn label_set(g: &KnowledgeGraph, d: &Dialogue) -> BTreeSet<LabelTriple> {
    d.subgraph
        .triples()
        .iter()
        .map(|t| {
            let (h, r, x) = g.triple_labels(t);
            (h.to_owned(), r.to_owned(), x.to_owned())
        })
        .collect()
}

pub fn label_entities(set: &BTreeSet<LabelTriple>) -> usize {
    set.iter()
        .flat_map(|(h, _, t)| [h.clone(), t.clone()])
        .collect::<BTreeSet<_>>()
        .len()
}

/// A one-turn dialogue with the given text and subgraph, bypassing the
/// generator.
pub fn bare_dialogue(g: &KnowledgeGraph, id: &str, triples: &[Triple], text: &str) -> Dialogue {
    let subgraph = g.induced_subgraph(triples.iter().copied()).unwrap();
    let t0 = g.triples()[0];
    let step = WalkStep {
        turn: 1,
        current: t0.head,
        relation: t0.relation,
        next: t0.tail,
        triple: t0,
        expansions: vec![],
        weight: 0.0,
    };
    Dialogue {
        id: id.to_owned(),
        community: 0,
        turns: vec![DialogueTurn {
            index: 1,
            question: text.to_owned(),
            answer: "noted".to_owned(),
            question_plan: step,
            answer_entities: vec![],
        }],
        entities: vec![],
        subgraph,
        provenance: Provenance {
            config_hash: String::new(),
            provider: "fixture".to_owned(),
        },
    }
}

const RELATIONS: [&str; 8] = [
    "symptom",
    "treatment",
    "cause",
    "complication",
    "examination",
    "drug",
    "department",
    "risk factor",
];

/// `chains` disjoint paths of `len` triples; entity `c{k}x{i}` is the i-th
/// node of chain k.
pub fn chain_graph(chains: usize, len: usize) -> KnowledgeGraph {
    let mut triples = Vec::new();
    for k in 0..chains {
        for i in 0..len {
            triples.push((
                format!("c{k}x{i}"),
                RELATIONS[(i + k) % RELATIONS.len()].to_owned(),
                format!("c{k}x{}", i + 1),
            ));
        }
    }
    KnowledgeGraph::from_triples(triples.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())))
}

/// Walks chain `k` from its first node for `steps` steps.
pub fn chain_plan(g: &KnowledgeGraph, k: usize, steps: usize, walk_index: usize) -> WalkPlan {
    let node = |i: usize| g.entity_id(&format!("c{k}x{i}")).unwrap();
    let mut plan = WalkPlan::new(k, walk_index, node(0));
    for i in 0..steps {
        let triple = *g
            .triples()
            .iter()
            .find(|t| t.head == node(i) && t.tail == node(i + 1))
            .unwrap();
        plan.steps.push(WalkStep {
            turn: i + 1,
            current: node(i),
            relation: triple.relation,
            next: node(i + 1),
            triple,
            expansions: vec![],
            weight: 0.0,
        });
        plan.visited.push(node(i + 1));
    }
    plan
}

/// Sixteen mock dialogues over disjoint 8-step chains, plus four copies of
/// chains 1, 5, 9 and 13 that stop one step early. The copies get later
/// ids and fewer entities, so they are the ones to go. Returns the graph,
/// all twenty dialogues and the ids of the four copies.
pub fn planted_duplicate_fixture() -> (KnowledgeGraph, Vec<Dialogue>, BTreeSet<String>) {
    let g = chain_graph(16, 8);
    let provider = MockProvider::new(7, 30);
    let cfg = ProviderConfig::default();
    let mut out = Vec::new();
    for k in 0..16 {
        out.push(generate_dialogue(&provider, &g, &chain_plan(&g, k, 8, 0), &cfg, "fixture").unwrap());
    }
    let mut dups = BTreeSet::new();
    for k in [1, 5, 9, 13] {
        let d = generate_dialogue(&provider, &g, &chain_plan(&g, k, 7, 1), &cfg, "fixture").unwrap();
        dups.insert(d.id.clone());
        out.push(d);
    }
    (g, out, dups)
}

/// Fifty dialogues over a 40-triple graph: ten seeded clusters, each a
/// random core of 4..8 triples perturbed by dropping and adding triples,
/// so pair overlaps spread on both sides of common thresholds.
pub fn jaccard_fixture(seed: u64) -> (KnowledgeGraph, Vec<Dialogue>) {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut labels = Vec::new();
    for i in 0..40 {
        labels.push((format!("t{}", i % 20), RELATIONS[i % 8].to_owned(), format!("t{}", (i * 7 + 3) % 20)));
    }
    let g = KnowledgeGraph::from_triples(labels.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())));
    let all: Vec<Triple> = g.triples().to_vec();
    let mut ids: Vec<usize> = (0..50).collect();
    ids.shuffle(&mut rng);
    let mut out = Vec::new();
    for c in 0..10 {
        let k = rng.gen_range(4..=8);
        let core: Vec<Triple> = all.choose_multiple(&mut rng, k).copied().collect();
        for v in 0..5 {
            let mut set: Vec<Triple> = core.clone();
            let drop = rng.gen_range(0..=2.min(set.len() - 1));
            for _ in 0..drop {
                let i = rng.gen_range(0..set.len());
                set.remove(i);
            }
            for _ in 0..rng.gen_range(0..=3) {
                set.push(*all.choose(&mut rng).unwrap());
            }
            let id = format!("d{:02}", ids[c * 5 + v]);
            out.push(bare_dialogue(&g, &id, &set, &format!("dialogue {id}")));
        }
    }
    (g, out)
}

/// Reference resolution over a precomputed similarity matrix: scan in id
/// order; a dialogue conflicting with kept ones replaces them all if it has
/// more entities than each (ties to the earlier id), else it is dropped.
/// Returns the removed ids.
pub fn greedy_oracle(ids: &[String], entities: &[usize], sim: &[Vec<f64>], threshold: f64) -> BTreeSet<String> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    let beats = |a: usize, b: usize| entities[a] > entities[b] || (entities[a] == entities[b] && ids[a] < ids[b]);
    let mut kept: Vec<usize> = Vec::new();
    let mut removed = BTreeSet::new();
    for i in order {
        let conflicts: Vec<usize> = kept.iter().copied().filter(|&k| sim[i][k] > threshold).collect();
        if conflicts.iter().all(|&k| beats(i, k)) {
            for k in &conflicts {
                removed.insert(ids[*k].clone());
            }
            kept.retain(|k| !conflicts.contains(k));
            kept.push(i);
        } else {
            removed.insert(ids[i].clone());
        }
    }
    removed
}

/// All-pairs Jaccard matrix over label sets.
pub fn jaccard_matrix(g: &KnowledgeGraph, ds: &[Dialogue]) -> Vec<Vec<f64>> {
    let sets: Vec<BTreeSet<LabelTriple>> = ds.iter().map(|d| label_set(g, d)).collect();
    sets.iter()
        .map(|a| sets.iter().map(|b| set_jaccard(a, b)).collect())
        .collect()
}
