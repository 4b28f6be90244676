//! Knowledge-graph driven construction of multi-turn dialogue datasets.
//!
//! The pipeline partitions a knowledge graph into communities, plans
//! relation-guided walks inside each community, turns every walk step into
//! a question/answer turn through a pluggable generation provider, removes
//! redundant dialogues, and splits the result into train/dev/test sets.

pub mod community;
pub mod dataset;
pub mod dialogue;
pub mod embedding;
pub mod eval;
pub mod filtering;
pub mod jsonl;
pub mod kg;
pub mod pipeline;
pub mod synthetic;
pub mod text;
pub mod walker;
