//! Two-role dialogue generation over walk plans.
//!
//! Every walk step becomes one turn: a question-role request followed by an
//! answer-role request. Both requests see the shared dialogue history, and
//! the answer request already contains the new question.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use crate::kg::{EntityId, KgError, KnowledgeGraph, Subgraph};
use crate::walker::{WalkPlan, WalkStep, MIN_PLAN_STEPS};

const PROMPT_TEMPLATE: &str = include_str!("templates/prompt.txt");
const HISTORY_SLOT: &str = "{DIALOGUE HISTORY}";
const PATH_SLOT: &str = "{SUBGRAPH QUERY PATH OR ANSWER ENTITY}";

pub const QUESTION_INSTRUCTION: &str =
    "You are the Question Generator. Ask the next question of the dialogue.";
pub const ANSWER_INSTRUCTION: &str =
    "You are the Answer Generator. Answer the latest question of the dialogue.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Question,
    Answer,
}

impl Role {
    pub fn instruction(self) -> &'static str {
        match self {
            Role::Question => QUESTION_INSTRUCTION,
            Role::Answer => ANSWER_INSTRUCTION,
        }
    }
}

/// Labels of one walk step, as seen by providers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLabels {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub related: Vec<String>,
}

impl StepLabels {
    pub fn from_step(g: &KnowledgeGraph, step: &WalkStep) -> Self {
        let (head, relation, tail) = g.triple_labels(&step.triple);
        Self {
            head: head.to_owned(),
            relation: relation.to_owned(),
            tail: tail.to_owned(),
            related: step
                .expansions
                .iter()
                .map(|x| g.entity_label(x.entity).to_owned())
                .collect(),
        }
    }

    /// `head —relation→ tail`, followed by one ` (related: X)` per expansion.
    pub fn path_line(&self) -> String {
        let mut line = format!("{} —{}→ {}", self.head, self.relation, self.tail);
        for r in &self.related {
            line.push_str(&format!(" (related: {r})"));
        }
        line
    }
}

/// Question/answer pairs so far, oldest first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    pairs: Vec<(String, String)>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, question: String, answer: String) {
        self.pairs.push((question, answer));
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `Q{t}: …` / `A{t}: …` lines, or `(none)`. A pending question is
    /// appended as the next `Q` line.
    pub fn render(&self, pending_question: Option<&str>) -> String {
        let mut lines = Vec::new();
        for (i, (q, a)) in self.pairs.iter().enumerate() {
            lines.push(format!("Q{}: {q}", i + 1));
            lines.push(format!("A{}: {a}", i + 1));
        }
        if let Some(q) = pending_question {
            lines.push(format!("Q{}: {q}", self.pairs.len() + 1));
        }
        if lines.is_empty() {
            "(none)".to_owned()
        } else {
            lines.join("\n")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    /// Role-specific system instruction.
    pub instruction: String,
    pub history: String,
    pub path_or_entity: String,
    pub role: Role,
    /// Structured view of the step, for template-based providers.
    pub step: StepLabels,
}

impl GenerationRequest {
    pub fn new(role: Role, history: String, step: StepLabels) -> Self {
        Self {
            instruction: role.instruction().to_owned(),
            history,
            path_or_entity: step.path_line(),
            role,
            step,
        }
    }
}

/// Fills the two template slots. Nothing else varies.
pub fn render_prompt(req: &GenerationRequest) -> String {
    let (before, rest) = PROMPT_TEMPLATE
        .split_once(HISTORY_SLOT)
        .expect("template has a history slot");
    let (middle, after) = rest.split_once(PATH_SLOT).expect("template has a path slot");
    let mut out = String::with_capacity(PROMPT_TEMPLATE.len() + req.history.len() + req.path_or_entity.len());
    out.push_str(before);
    out.push_str(&req.history);
    out.push_str(middle);
    out.push_str(&req.path_or_entity);
    out.push_str(after);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Mock,
    HttpLlm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub provider: ProviderKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// Requests per second across all workers; 0 disables limiting.
    pub rate_limit: f64,
    /// Character budget per generated utterance.
    pub length_limit: usize,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub seed: u64,
    pub workers: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Mock,
            endpoint: None,
            model_name: "mock".to_owned(),
            timeout_secs: 60.0,
            max_retries: 3,
            rate_limit: 0.0,
            length_limit: 30,
            api_key_env: "KGDIAL_API_KEY".to_owned(),
            seed: 7,
            workers: 4,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        let bad = |m: &str| Err(ProviderError::Config(m.to_owned()));
        if !(self.timeout_secs > 0.0) {
            return bad("timeout must be positive");
        }
        if self.rate_limit < 0.0 {
            return bad("rate limit must be non-negative");
        }
        if self.workers == 0 {
            return bad("workers must be >= 1");
        }
        if self.length_limit == 0 {
            return bad("length limit must be >= 1");
        }
        if self.provider == ProviderKind::HttpLlm && self.endpoint.as_deref().map_or(true, str::is_empty) {
            return bad("http_llm provider needs an endpoint");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider config: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
}

impl ProviderError {
    /// Whether a retry may help.
    pub fn is_transient(&self) -> bool {
        match self {
            ProviderError::Transport(_) => true,
            ProviderError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait Provider: Send + Sync {
    fn name(&self) -> String;
    fn complete(&self, req: &GenerationRequest) -> Result<String, ProviderError>;
}

fn graphemes(s: &str) -> usize {
    s.graphemes(true).count()
}

fn truncate_graphemes(s: &str, n: usize) -> String {
    s.graphemes(true).take(n).collect()
}

/// Deterministic template provider. Entity labels and the expansion clause
/// are always kept whole; the relation text is shortened to keep the
/// remaining characters within the length limit.
#[derive(Debug, Clone)]
pub struct MockProvider {
    pub seed: u64,
    pub length_limit: usize,
}

impl MockProvider {
    pub fn new(seed: u64, length_limit: usize) -> Self {
        Self { seed, length_limit }
    }
}

/// Template fill for the mock provider.
pub fn mock_generate(req: &GenerationRequest, length_limit: usize) -> String {
    let s = &req.step;
    match req.role {
        Role::Question => {
            let fixed = graphemes("What is the  of ?");
            let rel = truncate_graphemes(&s.relation, length_limit.saturating_sub(fixed));
            format!("What is the {rel} of {}?", s.head)
        }
        Role::Answer => {
            let related = if s.related.is_empty() {
                String::new()
            } else {
                format!(" Related: {}.", s.related.join(", "))
            };
            // the expansion clause only names entities, so it is not charged
            let fixed = graphemes(" is the  of .");
            let rel = truncate_graphemes(&s.relation, length_limit.saturating_sub(fixed));
            format!("{} is the {rel} of {}.{related}", s.tail, s.head)
        }
    }
}

impl Provider for MockProvider {
    fn name(&self) -> String {
        format!("mock(seed={})", self.seed)
    }

    fn complete(&self, req: &GenerationRequest) -> Result<String, ProviderError> {
        Ok(mock_generate(req, self.length_limit))
    }
}

/// Spaces requests at least `1 / rate` seconds apart across threads.
#[derive(Debug)]
struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn new(rate: f64) -> Self {
        Self {
            interval: (rate > 0.0).then(|| Duration::from_secs_f64(1.0 / rate)),
            next: Mutex::new(Instant::now()),
        }
    }

    fn wait(&self) {
        let Some(interval) = self.interval else { return };
        let slot = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

/// Chat-completions client. The role instruction is sent as the system
/// message and the rendered template as the user message.
pub struct HttpProvider {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    limiter: RateLimiter,
}

impl HttpProvider {
    pub fn new(cfg: &ProviderConfig) -> Result<Self, ProviderError> {
        cfg.validate()?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build();
        Ok(Self {
            agent,
            endpoint: cfg.endpoint.clone().unwrap_or_default(),
            model: cfg.model_name.clone(),
            api_key: std::env::var(&cfg.api_key_env).ok(),
            limiter: RateLimiter::new(cfg.rate_limit),
        })
    }
}

impl Provider for HttpProvider {
    fn name(&self) -> String {
        format!("http_llm({})", self.model)
    }

    fn complete(&self, req: &GenerationRequest) -> Result<String, ProviderError> {
        self.limiter.wait();
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": req.instruction},
                {"role": "user", "content": render_prompt(req)},
            ],
        });
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        match call.send_json(body) {
            Ok(resp) => {
                let v: serde_json::Value = resp
                    .into_json()
                    .map_err(|e| ProviderError::Transport(e.to_string()))?;
                v.pointer("/choices/0/message/content")
                    .and_then(|c| c.as_str())
                    .map(str::to_owned)
                    .ok_or_else(|| ProviderError::Malformed("no choices[0].message.content".into()))
            }
            Err(ureq::Error::Status(status, resp)) => Err(ProviderError::Status {
                status,
                body: resp.into_string().unwrap_or_default(),
            }),
            Err(ureq::Error::Transport(t)) => Err(ProviderError::Transport(t.to_string())),
        }
    }
}

pub fn build_provider(cfg: &ProviderConfig) -> Result<Box<dyn Provider>, ProviderError> {
    cfg.validate()?;
    Ok(match cfg.provider {
        ProviderKind::Mock => Box::new(MockProvider::new(cfg.seed, cfg.length_limit)),
        ProviderKind::HttpLlm => Box::new(HttpProvider::new(cfg)?),
    })
}

#[derive(Debug, Error)]
pub enum TurnError {
    #[error("empty generation ({role:?} role)")]
    EmptyGeneration { role: Role },
    #[error("{role:?} request failed after {attempts} attempt(s): {source}")]
    Provider {
        role: Role,
        attempts: u32,
        #[source]
        source: ProviderError,
    },
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("plan {id} has {steps} step(s); at least {MIN_PLAN_STEPS} are required")]
    PlanTooShort { id: String, steps: usize },
    #[error("dialogue {id} failed at turn {turn} after {} completed turn(s): {source}", partial.len())]
    Turn {
        id: String,
        turn: usize,
        partial: Vec<DialogueTurn>,
        #[source]
        source: TurnError,
    },
    #[error("dialogue {id}: {source}")]
    Subgraph {
        id: String,
        #[source]
        source: KgError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub index: usize,
    pub question: String,
    pub answer: String,
    pub question_plan: WalkStep,
    pub answer_entities: Vec<EntityId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub provider: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub community: usize,
    pub turns: Vec<DialogueTurn>,
    /// Labels of the subgraph's entities, in id order.
    pub entities: Vec<String>,
    pub subgraph: Subgraph,
    pub provenance: Provenance,
}

impl Dialogue {
    /// All questions and answers, one utterance per line.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for t in &self.turns {
            out.push_str(&t.question);
            out.push('\n');
            out.push_str(&t.answer);
            out.push('\n');
        }
        out
    }

    pub fn key_entity_count(&self) -> usize {
        self.subgraph.entities().len()
    }

    /// Restores derived fields after deserialization.
    pub fn rehydrate(mut self) -> Self {
        self.subgraph = self.subgraph.rehydrate();
        self
    }
}

fn call_with_retry(
    provider: &dyn Provider,
    req: &GenerationRequest,
    max_retries: u32,
    length_limit: usize,
) -> Result<String, TurnError> {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match provider.complete(req) {
            Ok(text) => {
                let text = text.trim().to_owned();
                if text.is_empty() {
                    return Err(TurnError::EmptyGeneration { role: req.role });
                }
                if graphemes(&text) > length_limit {
                    tracing::debug!(role = ?req.role, len = graphemes(&text), "generation exceeds length limit");
                }
                return Ok(text);
            }
            Err(e) if e.is_transient() && attempts <= max_retries => {
                tracing::warn!(attempt = attempts, error = %e, "retrying provider call");
                std::thread::sleep(Duration::from_millis(50 << attempts.min(6)));
            }
            Err(source) => {
                return Err(TurnError::Provider {
                    role: req.role,
                    attempts,
                    source,
                })
            }
        }
    }
}

/// Generates one turn and appends it to `history`.
pub fn generate_turn(
    provider: &dyn Provider,
    g: &KnowledgeGraph,
    step: &WalkStep,
    history: &mut History,
    cfg: &ProviderConfig,
) -> Result<DialogueTurn, TurnError> {
    let labels = StepLabels::from_step(g, step);
    let q_req = GenerationRequest::new(Role::Question, history.render(None), labels.clone());
    let question = call_with_retry(provider, &q_req, cfg.max_retries, cfg.length_limit)?;
    let a_req = GenerationRequest::new(Role::Answer, history.render(Some(&question)), labels);
    let answer = call_with_retry(provider, &a_req, cfg.max_retries, cfg.length_limit)?;
    history.push(question.clone(), answer.clone());

    let mut answer_entities = vec![step.next];
    answer_entities.extend(step.expansions.iter().map(|x| x.entity));
    Ok(DialogueTurn {
        index: step.turn,
        question,
        answer,
        question_plan: step.clone(),
        answer_entities,
    })
}

pub fn generate_dialogue(
    provider: &dyn Provider,
    g: &KnowledgeGraph,
    plan: &WalkPlan,
    cfg: &ProviderConfig,
    config_hash: &str,
) -> Result<Dialogue, GenerationError> {
    let id = plan.id();
    if plan.steps.len() < MIN_PLAN_STEPS {
        return Err(GenerationError::PlanTooShort {
            id,
            steps: plan.steps.len(),
        });
    }
    let mut history = History::new();
    let mut turns = Vec::with_capacity(plan.steps.len());
    for (i, step) in plan.steps.iter().enumerate() {
        match generate_turn(provider, g, step, &mut history, cfg) {
            Ok(mut turn) => {
                turn.index = i + 1;
                turns.push(turn);
            }
            Err(source) => {
                return Err(GenerationError::Turn {
                    id,
                    turn: i + 1,
                    partial: turns,
                    source,
                })
            }
        }
    }
    let subgraph = g
        .induced_subgraph(plan.steps.iter().flat_map(|s| s.triples()))
        .map_err(|source| GenerationError::Subgraph { id: id.clone(), source })?;
    let entities = subgraph
        .entities()
        .iter()
        .map(|&e| g.entity_label(e).to_owned())
        .collect();
    Ok(Dialogue {
        id,
        community: plan.community,
        turns,
        entities,
        subgraph,
        provenance: Provenance {
            config_hash: config_hash.to_owned(),
            provider: provider.name(),
        },
    })
}

/// Generates dialogues on `cfg.workers` threads; results keep plan order.
pub fn generate_dialogues(
    provider: &dyn Provider,
    g: &KnowledgeGraph,
    plans: &[WalkPlan],
    cfg: &ProviderConfig,
    config_hash: &str,
) -> Vec<Result<Dialogue, GenerationError>> {
    use rayon::prelude::*;
    let run = || {
        plans
            .par_iter()
            .map(|p| generate_dialogue(provider, g, p, cfg, config_hash))
            .collect()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}
