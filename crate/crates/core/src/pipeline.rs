//! Stage orchestration over an output directory.
//!
//! Each stage reads its inputs from artifacts written by earlier stages and
//! writes its own, so running the stages one by one produces the same files
//! as [`run`]. A `manifest.json` records the config hash, seeds, stage
//! timings and artifact checksums.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::community::{partition_graph, read_partition, write_partition, PartitionConfig};
use crate::dataset::{compute_stats, read_dialogues, split, SplitRatios};
use crate::dialogue::{build_provider, generate_dialogues, Dialogue, GenerationError, ProviderConfig};
use crate::embedding::{embed_graph, load_external_embeddings, EmbeddingConfig, Embeddings};
use crate::filtering::{filter_pipeline, FilterConfig};
use crate::jsonl::{read_jsonl, write_jsonl};
use crate::kg::{load_graph, KnowledgeGraph, TripleFormat};
use crate::walker::{plan_walks_in_scopes, WalkConfig, WalkPlan, WalkRecord, WalkScope, WalkStrategy};

pub const GRAPH_FILE: &str = "graph.tsv";
pub const GRAPH_STATS_FILE: &str = "graph_stats.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const PARTITION_FILE: &str = "partition.jsonl";
pub const WALKS_FILE: &str = "walks.jsonl";
pub const DIALOGUES_FILE: &str = "dialogues.jsonl";
pub const PARTIAL_DIALOGUES_FILE: &str = "dialogues.partial.jsonl";
pub const GENERATION_ERRORS_FILE: &str = "generation_errors.jsonl";
pub const FILTERED_FILE: &str = "filtered.jsonl";
pub const FILTER_REPORT_FILE: &str = "filter_report.jsonl";
pub const SPLIT_FILES: [&str; 3] = ["train.jsonl", "dev.jsonl", "test.jsonl"];
pub const STATS_FILE: &str = "stats.tsv";
pub const STATS_JSON_FILE: &str = "stats.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Which of partitioning and adaptive walking are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Full,
    PartitionOnly,
    ArgwOnly,
    Baseline,
}

impl Mode {
    pub fn partitioning(self) -> bool {
        matches!(self, Mode::Full | Mode::PartitionOnly)
    }

    pub fn adaptive_walks(self) -> bool {
        matches!(self, Mode::Full | Mode::ArgwOnly)
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Mode::Full),
            "partition_only" => Ok(Mode::PartitionOnly),
            "argw_only" => Ok(Mode::ArgwOnly),
            "baseline" => Ok(Mode::Baseline),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub kg: PathBuf,
    pub format: TripleFormat,
    pub output: PathBuf,
    /// Precomputed entity vectors; computed from the graph when absent.
    pub embeddings: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            kg: PathBuf::from("kg.tsv"),
            format: TripleFormat::Tsv,
            output: PathBuf::from("out"),
            embeddings: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub ratios: SplitRatios,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: SplitRatios::default(),
            seed: 13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub paths: Paths,
    pub embedding: EmbeddingConfig,
    pub partition: PartitionConfig,
    pub walk: WalkConfig,
    /// Walks per community when partitioning is on.
    pub walks_per_community: usize,
    /// Walks over the whole graph when partitioning is off.
    pub whole_graph_walks: usize,
    pub provider: ProviderConfig,
    pub filter: FilterConfig,
    pub split: SplitConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Full,
            paths: Paths::default(),
            embedding: EmbeddingConfig::default(),
            partition: PartitionConfig::default(),
            walk: WalkConfig::default(),
            walks_per_community: 8,
            whole_graph_walks: 48,
            provider: ProviderConfig::default(),
            filter: FilterConfig::default(),
            split: SplitConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |e: &dyn std::fmt::Display| PipelineError::Config(e.to_string());
        self.embedding.validate().map_err(|e| cfg(&e))?;
        self.partition.validate().map_err(|e| cfg(&e))?;
        self.walk.validate().map_err(|e| cfg(&e))?;
        self.provider.validate().map_err(|e| cfg(&e))?;
        self.filter.validate().map_err(|e| cfg(&e))?;
        self.split.ratios.validate().map_err(|e| cfg(&e))?;
        if self.walks_per_community == 0 || self.whole_graph_walks == 0 {
            return Err(PipelineError::Config("walk counts must be >= 1".into()));
        }
        Ok(())
    }

    /// Walk settings with the strategy implied by the mode.
    pub fn effective_walk(&self) -> WalkConfig {
        WalkConfig {
            strategy: if self.mode.adaptive_walks() {
                WalkStrategy::Adaptive
            } else {
                WalkStrategy::UniformRandom
            },
            ..self.walk.clone()
        }
    }

    /// SHA-256 over every setting that can change an artifact. Paths and
    /// the worker count are excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        c.provider.workers = 1;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Embed,
    Partition,
    Walk,
    Generate,
    Filter,
    Split,
    Stats,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Embed,
        Stage::Partition,
        Stage::Walk,
        Stage::Generate,
        Stage::Filter,
        Stage::Split,
        Stage::Stats,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Embed => "embed",
            Stage::Partition => "partition",
            Stage::Walk => "walk",
            Stage::Generate => "generate",
            Stage::Filter => "filter",
            Stage::Split => "split",
            Stage::Stats => "stats",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage} stage: missing {artifact} ({})", path.display())]
    MissingArtifact {
        stage: Stage,
        artifact: &'static str,
        path: PathBuf,
    },
    #[error("{stage} stage failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("generate stage: provider failure: {0}")]
    Provider(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::MissingArtifact { .. } | PipelineError::Stage { .. } => 2,
            PipelineError::Provider(_) => 3,
        }
    }

    fn stage(stage: Stage, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub config_hash: String,
    pub seconds: f64,
    pub skipped: bool,
    pub artifacts: Vec<ArtifactRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub mode: Option<Mode>,
    pub seeds: BTreeMap<String, u64>,
    pub stages: BTreeMap<Stage, StageRecord>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Self {
        std::fs::read_to_string(dir.join(MANIFEST_FILE))
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok())
            .unwrap_or_default()
    }

    fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n").map_err(|e| PipelineError::stage(Stage::Ingest, e))
    }

    /// Whether `stage` completed under `hash` and its artifacts are intact.
    pub fn is_current(&self, dir: &Path, stage: Stage, hash: &str) -> bool {
        let Some(rec) = self.stages.get(&stage) else { return false };
        rec.config_hash == hash
            && rec
                .artifacts
                .iter()
                .all(|a| sha256_file(&dir.join(&a.path)).as_deref() == Some(a.sha256.as_str()))
    }
}

pub fn sha256_file(path: &Path) -> Option<String> {
    std::fs::read(path).ok().map(|b| hex(&Sha256::digest(&b)))
}

/// Output directory plus the config driving it.
pub struct Workspace<'a> {
    pub cfg: &'a PipelineConfig,
    pub dir: PathBuf,
    hash: String,
}

impl<'a> Workspace<'a> {
    pub fn new(cfg: &'a PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let dir = cfg.paths.output.clone();
        std::fs::create_dir_all(&dir)
            .map_err(|e| PipelineError::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            cfg,
            dir,
            hash: cfg.hash(),
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn require(&self, stage: Stage, artifact: &'static str, name: &str) -> Result<PathBuf, PipelineError> {
        let path = self.path(name);
        if path.is_file() {
            Ok(path)
        } else {
            Err(PipelineError::MissingArtifact { stage, artifact, path })
        }
    }

    fn record(&self, stage: Stage, started: Instant, skipped: bool, files: &[&str]) -> Result<(), PipelineError> {
        let mut m = Manifest::load(&self.dir);
        if m.config_hash != self.hash {
            m.stages.clear();
        }
        m.config_hash = self.hash.clone();
        m.mode = Some(self.cfg.mode);
        m.seeds = BTreeMap::from([
            ("embedding".to_owned(), self.cfg.embedding.seed),
            ("walk".to_owned(), self.cfg.walk.seed),
            ("provider".to_owned(), self.cfg.provider.seed),
            ("split".to_owned(), self.cfg.split.seed),
        ]);
        let artifacts = files
            .iter()
            .map(|f| ArtifactRecord {
                path: (*f).to_owned(),
                sha256: sha256_file(&self.path(f)).unwrap_or_default(),
            })
            .collect();
        m.stages.insert(
            stage,
            StageRecord {
                stage,
                config_hash: self.hash.clone(),
                seconds: started.elapsed().as_secs_f64(),
                skipped,
                artifacts,
            },
        );
        m.save(&self.dir)
    }

    fn graph(&self, stage: Stage) -> Result<KnowledgeGraph, PipelineError> {
        let path = self.require(stage, "graph", GRAPH_FILE)?;
        load_graph(&path, TripleFormat::Tsv).map_err(|e| PipelineError::stage(stage, e))
    }

    fn embeddings(&self, stage: Stage, g: &KnowledgeGraph) -> Result<Embeddings, PipelineError> {
        let path = self.require(stage, "embeddings", EMBEDDINGS_FILE)?;
        let map = load_external_embeddings(&path, self.cfg.embedding.dimension).map_err(|e| PipelineError::stage(stage, e))?;
        Embeddings::from_labeled(g, self.cfg.embedding.dimension, map).map_err(|e| PipelineError::stage(stage, e))
    }

    /// Loads the source graph and writes it back in canonical TSV.
    pub fn ingest(&self) -> Result<(), PipelineError> {
        let t = Instant::now();
        let s = Stage::Ingest;
        if !self.cfg.paths.kg.is_file() {
            return Err(PipelineError::MissingArtifact {
                stage: s,
                artifact: "knowledge graph source",
                path: self.cfg.paths.kg.clone(),
            });
        }
        let g = load_graph(&self.cfg.paths.kg, self.cfg.paths.format).map_err(|e| PipelineError::stage(s, e))?;
        let mut tsv = String::new();
        for tr in g.triples() {
            let (h, r, t) = g.triple_labels(tr);
            tsv.push_str(&format!("{h}\t{r}\t{t}\n"));
        }
        std::fs::write(self.path(GRAPH_FILE), tsv).map_err(|e| PipelineError::stage(s, e))?;
        let stats = serde_json::to_string_pretty(&g.stats()).expect("stats serialize");
        std::fs::write(self.path(GRAPH_STATS_FILE), stats + "\n").map_err(|e| PipelineError::stage(s, e))?;
        tracing::info!(entities = g.entity_count(), triples = g.triple_count(), "ingested graph");
        self.record(s, t, false, &[GRAPH_FILE, GRAPH_STATS_FILE])
    }

    /// Computes entity vectors, or imports them from `paths.embeddings`.
    pub fn embed(&self) -> Result<(), PipelineError> {
        let t = Instant::now();
        let s = Stage::Embed;
        let g = self.graph(s)?;
        let emb = match &self.cfg.paths.embeddings {
            Some(p) => {
                let map = load_external_embeddings(p, self.cfg.embedding.dimension).map_err(|e| PipelineError::stage(s, e))?;
                Embeddings::from_labeled(&g, self.cfg.embedding.dimension, map)
            }
            None => embed_graph(&g, &self.cfg.embedding),
        }
        .map_err(|e| PipelineError::stage(s, e))?;
        emb.write_jsonl(&g, &self.path(EMBEDDINGS_FILE)).map_err(|e| PipelineError::stage(s, e))?;
        self.record(s, t, false, &[EMBEDDINGS_FILE])
    }

    /// Partitions the graph; a no-op in modes without partitioning.
    pub fn partition(&self) -> Result<(), PipelineError> {
        let t = Instant::now();
        let s = Stage::Partition;
        if !self.cfg.mode.partitioning() {
            tracing::info!(mode = ?self.cfg.mode, "partition stage skipped");
            return self.record(s, t, true, &[]);
        }
        let g = self.graph(s)?;
        let emb = self.embeddings(s, &g)?;
        let p = partition_graph(&g, &emb, &self.cfg.partition).map_err(|e| PipelineError::stage(s, e))?;
        tracing::info!(communities = p.len(), modularity = p.modularity, "partitioned graph");
        write_partition(&self.path(PARTITION_FILE), &g, &p).map_err(|e| PipelineError::stage(s, e))?;
        self.record(s, t, false, &[PARTITION_FILE])
    }

    pub fn walk(&self) -> Result<(), PipelineError> {
        let t = Instant::now();
        let s = Stage::Walk;
        let g = self.graph(s)?;
        let emb = self.embeddings(s, &g)?;
        let (scopes, count) = if self.cfg.mode.partitioning() {
            let path = self.require(s, "partition", PARTITION_FILE)?;
            let p = read_partition(&path, &g).map_err(|e| PipelineError::stage(s, e))?;
            (WalkScope::from_partition(&g, &p), self.cfg.walks_per_community)
        } else {
            (vec![WalkScope::whole_graph(&g)], self.cfg.whole_graph_walks)
        };
        let plans = plan_walks_in_scopes(&g, &emb, &scopes, &self.cfg.effective_walk(), count)
            .map_err(|e| PipelineError::stage(s, e))?;
        tracing::info!(plans = plans.len(), "planned walks");
        let records: Vec<WalkRecord> = plans.iter().map(|p| WalkRecord::new(&g, p)).collect();
        write_jsonl(&self.path(WALKS_FILE), &records).map_err(|e| PipelineError::stage(s, e))?;
        self.record(s, t, false, &[WALKS_FILE])
    }

    pub fn generate(&self) -> Result<(), PipelineError> {
        let t = Instant::now();
        let s = Stage::Generate;
        let g = self.graph(s)?;
        let path = self.require(s, "walk plans", WALKS_FILE)?;
        let records: Vec<WalkRecord> = read_jsonl(&path).map_err(|e| PipelineError::stage(s, e))?;
        let plans: Vec<WalkPlan> = records.into_iter().map(|r| r.plan).collect();
        let provider = build_provider(&self.cfg.provider).map_err(|e| PipelineError::Config(e.to_string()))?;
        let results = generate_dialogues(provider.as_ref(), &g, &plans, &self.cfg.provider, &self.hash);

        let mut dialogues = Vec::new();
        let mut failures = Vec::new();
        for r in results {
            match r {
                Ok(d) => dialogues.push(d),
                Err(e) => failures.push(e),
            }
        }
        if failures.is_empty() {
            write_jsonl(&self.path(DIALOGUES_FILE), &dialogues).map_err(|e| PipelineError::stage(s, e))?;
            tracing::info!(dialogues = dialogues.len(), "generated dialogues");
            return self.record(s, t, false, &[DIALOGUES_FILE]);
        }
        write_jsonl(&self.path(PARTIAL_DIALOGUES_FILE), &dialogues).map_err(|e| PipelineError::stage(s, e))?;
        let messages: Vec<String> = failures.iter().map(ToString::to_string).collect();
        write_jsonl(&self.path(GENERATION_ERRORS_FILE), &messages).map_err(|e| PipelineError::stage(s, e))?;
        let summary = format!("{} of {} dialogues failed; first: {}", failures.len(), plans.len(), messages[0]);
        if failures.iter().any(|f| matches!(f, GenerationError::Turn { .. })) {
            Err(PipelineError::Provider(summary))
        } else {
            Err(PipelineError::stage(s, summary))
        }
    }

    pub fn filter(&self) -> Result<(), PipelineError> {
        let t = Instant::now();
        let s = Stage::Filter;
        let path = self.require(s, "dialogues", DIALOGUES_FILE)?;
        let dialogues = read_dialogues(&path).map_err(|e| PipelineError::stage(s, e))?;
        let (kept, report) = filter_pipeline(dialogues, &self.cfg.filter).map_err(|e| PipelineError::stage(s, e))?;
        tracing::info!(input = report.input_count, kept = report.kept_count, "filtered dialogues");
        write_jsonl(&self.path(FILTERED_FILE), &kept).map_err(|e| PipelineError::stage(s, e))?;
        report
            .write_audit(&self.path(FILTER_REPORT_FILE))
            .map_err(|e| PipelineError::stage(s, e))?;
        self.record(s, t, false, &[FILTERED_FILE, FILTER_REPORT_FILE])
    }

    pub fn split(&self) -> Result<(), PipelineError> {
        let t = Instant::now();
        let s = Stage::Split;
        let path = self.require(s, "filtered dialogues", FILTERED_FILE)?;
        let dialogues = read_dialogues(&path).map_err(|e| PipelineError::stage(s, e))?;
        let bundle = split(dialogues, self.cfg.split.ratios, self.cfg.split.seed).map_err(|e| PipelineError::stage(s, e))?;
        for (name, part) in SPLIT_FILES.iter().zip([&bundle.train, &bundle.dev, &bundle.test]) {
            write_jsonl(&self.path(name), part).map_err(|e| PipelineError::stage(s, e))?;
        }
        self.record(s, t, false, &SPLIT_FILES)
    }

    pub fn stats(&self) -> Result<(), PipelineError> {
        let t = Instant::now();
        let s = Stage::Stats;
        let mut parts: Vec<Vec<Dialogue>> = Vec::new();
        for name in SPLIT_FILES {
            let path = self.require(s, "splits", name)?;
            parts.push(read_dialogues(&path).map_err(|e| PipelineError::stage(s, e))?);
        }
        let stats = compute_stats(&parts[0], &parts[1], &parts[2]);
        std::fs::write(self.path(STATS_FILE), stats.to_tsv()).map_err(|e| PipelineError::stage(s, e))?;
        let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
        std::fs::write(self.path(STATS_JSON_FILE), json + "\n").map_err(|e| PipelineError::stage(s, e))?;
        self.record(s, t, false, &[STATS_FILE, STATS_JSON_FILE])
    }

    pub fn run_stage(&self, stage: Stage) -> Result<(), PipelineError> {
        let _span = tracing::info_span!("stage", name = stage.name()).entered();
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Embed => self.embed(),
            Stage::Partition => self.partition(),
            Stage::Walk => self.walk(),
            Stage::Generate => self.generate(),
            Stage::Filter => self.filter(),
            Stage::Split => self.split(),
            Stage::Stats => self.stats(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Skip stages whose manifest entry matches the config hash and whose
    /// artifacts still have their recorded checksums.
    pub resume: bool,
}

/// Runs every stage in order.
pub fn run(cfg: &PipelineConfig, opts: RunOptions) -> Result<Manifest, PipelineError> {
    let ws = Workspace::new(cfg)?;
    for stage in Stage::ALL {
        if opts.resume && Manifest::load(&ws.dir).is_current(&ws.dir, stage, ws.config_hash()) {
            tracing::info!(stage = stage.name(), "up to date, skipping");
            continue;
        }
        ws.run_stage(stage)?;
    }
    Ok(Manifest::load(&ws.dir))
}
