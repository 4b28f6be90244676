//! Train/dev/test splitting and corpus statistics.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::Dialogue;
use crate::jsonl::{read_jsonl, write_jsonl, JsonlError};
use crate::text::token_count;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("need at least 3 dialogues to split, got {0}")]
    TooFew(usize),
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 6.0 / 9.0,
            dev: 1.0 / 9.0,
            test: 2.0 / 9.0,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if [self.train, self.dev, self.test].iter().any(|r| !(*r > 0.0)) {
            return Err(DatasetError::InvalidRatios("ratios must be positive".into()));
        }
        let sum = self.train + self.dev + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidRatios(format!("ratios sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Split sizes for `n` items: train and dev are rounded, test takes the rest.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = ((n as f64 * self.train).round() as usize).min(n);
        let dev = ((n as f64 * self.dev).round() as usize).min(n - train);
        (train, dev, n - train - dev)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub total_dialogues: usize,
    pub avg_turns_per_dialogue: f64,
    pub avg_tokens_per_dialogue: f64,
    pub total_key_entities: usize,
    pub avg_key_entities_per_dialogue: f64,
    /// Set for a split with no dialogues; its averages are reported as 0.
    pub empty: bool,
}

impl SplitStats {
    pub fn of(dialogues: &[Dialogue]) -> Self {
        let n = dialogues.len();
        if n == 0 {
            return Self {
                empty: true,
                ..Self::default()
            };
        }
        let turns: usize = dialogues.iter().map(|d| d.turns.len()).sum();
        let tokens: usize = dialogues
            .iter()
            .flat_map(|d| &d.turns)
            .map(|t| token_count(&t.question) + token_count(&t.answer))
            .sum();
        let entities: usize = dialogues.iter().map(Dialogue::key_entity_count).sum();
        Self {
            total_dialogues: n,
            avg_turns_per_dialogue: turns as f64 / n as f64,
            avg_tokens_per_dialogue: tokens as f64 / n as f64,
            total_key_entities: entities,
            avg_key_entities_per_dialogue: entities as f64 / n as f64,
            empty: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub train: SplitStats,
    pub dev: SplitStats,
    pub test: SplitStats,
    pub total: SplitStats,
}

impl DatasetStats {
    /// Tab-separated table: one row per statistic, one column per split.
    pub fn to_tsv(&self) -> String {
        let cols = [&self.train, &self.dev, &self.test, &self.total];
        let mut out = String::from("statistic\ttrain\tdev\ttest\ttotal\n");
        let mut row = |name: &str, f: &dyn Fn(&SplitStats) -> String| {
            let cells: Vec<String> = cols.iter().map(|s| f(s)).collect();
            let _ = writeln!(out, "{name}\t{}", cells.join("\t"));
        };
        row("Total Dialogues", &|s| s.total_dialogues.to_string());
        row("Average Speaker Turns Per Dialogue", &|s| format!("{:.1}", s.avg_turns_per_dialogue));
        row("Average Tokens Per Dialogue", &|s| format!("{:.1}", s.avg_tokens_per_dialogue));
        row("Total Key Entities", &|s| s.total_key_entities.to_string());
        row("Average Key Entities Per Dialogue", &|s| format!("{:.1}", s.avg_key_entities_per_dialogue));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub train: Vec<Dialogue>,
    pub dev: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
    pub stats: DatasetStats,
    pub split_seed: u64,
}

pub fn compute_stats(train: &[Dialogue], dev: &[Dialogue], test: &[Dialogue]) -> DatasetStats {
    let all: Vec<Dialogue> = train.iter().chain(dev).chain(test).cloned().collect();
    DatasetStats {
        train: SplitStats::of(train),
        dev: SplitStats::of(dev),
        test: SplitStats::of(test),
        total: SplitStats::of(&all),
    }
}

/// Seeded shuffle, then contiguous train/dev/test slices.
pub fn split(dialogues: Vec<Dialogue>, ratios: SplitRatios, seed: u64) -> Result<DatasetBundle, DatasetError> {
    ratios.validate()?;
    let n = dialogues.len();
    if n < 3 {
        return Err(DatasetError::TooFew(n));
    }
    let mut shuffled = dialogues;
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (n_train, n_dev, _) = ratios.sizes(n);
    let test = shuffled.split_off(n_train + n_dev);
    let dev = shuffled.split_off(n_train);
    let train = shuffled;
    let stats = compute_stats(&train, &dev, &test);
    Ok(DatasetBundle {
        train,
        dev,
        test,
        stats,
        split_seed: seed,
    })
}

impl DatasetBundle {
    /// Writes `train.jsonl`, `dev.jsonl`, `test.jsonl` and `stats.tsv`.
    pub fn write(&self, dir: &Path) -> Result<(), DatasetError> {
        write_jsonl(&dir.join("train.jsonl"), &self.train)?;
        write_jsonl(&dir.join("dev.jsonl"), &self.dev)?;
        write_jsonl(&dir.join("test.jsonl"), &self.test)?;
        let stats = dir.join("stats.tsv");
        std::fs::write(&stats, self.stats.to_tsv()).map_err(|source| DatasetError::Io { path: stats, source })
    }

    pub fn read(dir: &Path, split_seed: u64) -> Result<Self, DatasetError> {
        let load = |name: &str| -> Result<Vec<Dialogue>, DatasetError> {
            Ok(read_dialogues(&dir.join(name))?)
        };
        let (train, dev, test) = (load("train.jsonl")?, load("dev.jsonl")?, load("test.jsonl")?);
        let stats = compute_stats(&train, &dev, &test);
        Ok(Self {
            train,
            dev,
            test,
            stats,
            split_seed,
        })
    }
}

/// Reads dialogues and restores their derived fields.
pub fn read_dialogues(path: &Path) -> Result<Vec<Dialogue>, JsonlError> {
    let raw: Vec<Dialogue> = read_jsonl(path)?;
    Ok(raw.into_iter().map(Dialogue::rehydrate).collect())
}
