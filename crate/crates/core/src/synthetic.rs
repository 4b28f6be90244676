//! Seeded planted-partition knowledge graphs for benchmarks and demos.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kg::{GraphBuilder, KnowledgeGraph};

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

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub blocks: usize,
    pub block_size: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            blocks: 3,
            block_size: 10,
            p_in: 0.8,
            p_out: 0.05,
            seed: 42,
        }
    }
}

impl PlantedConfig {
    /// Six sparser blocks of fifteen; large enough that an eight-step walk
    /// does not exhaust its community.
    pub fn pipeline_fixture() -> Self {
        Self {
            blocks: 6,
            block_size: 15,
            p_in: 0.5,
            p_out: 0.02,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedGraph {
    /// Entity labels (`b{block}e{index}`) in block-major order.
    pub entities: Vec<String>,
    /// Planted block of each entity in `entities`.
    pub blocks: Vec<usize>,
    pub triples: Vec<(String, String, String)>,
}

impl PlantedGraph {
    /// Builds the graph with entities interned in block-major order, so
    /// entity id `i` has planted block `blocks[i]`.
    pub fn graph(&self) -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        for e in &self.entities {
            b.entity(e);
        }
        for (h, r, t) in &self.triples {
            b.triple(h, r, t);
        }
        b.build()
    }

    /// Writes the triples as TSV. Entities are emitted in block-major order
    /// by the first triples only if every entity has an edge.
    pub fn write_tsv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (h, r, t) in &self.triples {
            writeln!(f, "{h}\t{r}\t{t}")?;
        }
        f.flush()
    }
}

/// Stochastic block model: each unordered pair is linked with probability
/// `p_in` inside a block and `p_out` across blocks.
pub fn planted_partition(cfg: &PlantedConfig) -> PlantedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.blocks * cfg.block_size;
    let entities: Vec<String> = (0..n)
        .map(|i| format!("b{}e{:02}", i / cfg.block_size, i % cfg.block_size))
        .collect();
    let blocks: Vec<usize> = (0..n).map(|i| i / cfg.block_size).collect();
    let mut triples = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if blocks[i] == blocks[j] { cfg.p_in } else { cfg.p_out };
            if rng.gen_bool(p) {
                let rel = RELATIONS[rng.gen_range(0..RELATIONS.len())];
                let (h, t) = if rng.gen_bool(0.5) { (i, j) } else { (j, i) };
                triples.push((entities[h].clone(), rel.to_owned(), entities[t].clone()));
            }
        }
    }
    PlantedGraph {
        entities,
        blocks,
        triples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_block_major() {
        let a = planted_partition(&PlantedConfig::default());
        let b = planted_partition(&PlantedConfig::default());
        assert_eq!(a.triples, b.triples);
        let g = a.graph();
        assert_eq!(g.entity_count(), 30);
        assert_eq!(g.entity_label(crate::kg::EntityId(12)), "b1e02");
        assert_eq!(a.blocks[12], 1);
    }
}
