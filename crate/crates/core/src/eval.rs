//! Corpus BLEU-1..4 and ROUGE-L against dataset answers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::read_dialogues;
use crate::jsonl::{read_jsonl, JsonlError};
use crate::text::tokenize;

/// Substitute for a zero n-gram precision.
pub const BLEU_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("{candidates} candidates but {references} references")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("max_order must be in 1..=4, got {0}")]
    InvalidOrder(usize),
    #[error("missing model outputs for {} turn(s): {}", .0.len(), format_keys(.0))]
    MissingOutputs(Vec<(String, usize)>),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

fn format_keys(keys: &[(String, usize)]) -> String {
    keys.iter()
        .map(|(id, t)| format!("({id}, {t})"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn ngrams<'a>(tokens: &[&'a str], n: usize) -> HashMap<Vec<&'a str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    out
}

fn check_pairs<T>(candidates: &[T], references: &[T]) -> Result<(), EvalError> {
    if candidates.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    Ok(())
}

/// Corpus-level BLEU over tokenized pairs, one reference per candidate.
///
/// An order with no candidate n-grams at all scores precision 1 when the
/// references have none either, and the epsilon otherwise.
pub fn bleu_tokens(candidates: &[Vec<&str>], references: &[Vec<&str>], max_order: usize) -> Result<f64, EvalError> {
    check_pairs(candidates, references)?;
    if !(1..=4).contains(&max_order) {
        return Err(EvalError::InvalidOrder(max_order));
    }
    let mut matches = vec![0usize; max_order];
    let mut totals = vec![0usize; max_order];
    let mut ref_totals = vec![0usize; max_order];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        c_len += c.len();
        r_len += r.len();
        for n in 1..=max_order {
            let cg = ngrams(c, n);
            let rg = ngrams(r, n);
            totals[n - 1] += cg.values().sum::<usize>();
            ref_totals[n - 1] += rg.values().sum::<usize>();
            matches[n - 1] += cg
                .iter()
                .map(|(g, &k)| k.min(rg.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    if c_len == 0 {
        return Ok(if r_len == 0 { 1.0 } else { 0.0 });
    }
    let log_sum: f64 = (0..max_order)
        .map(|i| {
            let p = if totals[i] == 0 {
                if ref_totals[i] == 0 {
                    1.0
                } else {
                    BLEU_EPSILON
                }
            } else if matches[i] == 0 {
                BLEU_EPSILON
            } else {
                matches[i] as f64 / totals[i] as f64
            };
            p.ln()
        })
        .sum();
    let bp = if c_len < r_len {
        (1.0 - r_len as f64 / c_len as f64).exp()
    } else {
        1.0
    };
    Ok((bp * (log_sum / max_order as f64).exp()).clamp(0.0, 1.0))
}

pub fn bleu(candidates: &[String], references: &[String], max_order: usize) -> Result<f64, EvalError> {
    check_pairs(candidates, references)?;
    let c: Vec<Vec<&str>> = candidates.iter().map(|s| tokenize(s)).collect();
    let r: Vec<Vec<&str>> = references.iter().map(|s| tokenize(s)).collect();
    bleu_tokens(&c, &r, max_order)
}

fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Balanced LCS F-measure for one pair. Two empty sequences score 1.
pub fn rouge_l_pair(candidate: &[&str], reference: &[&str]) -> f64 {
    if candidate.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Mean per-pair ROUGE-L F1.
pub fn rouge_l(candidates: &[String], references: &[String]) -> Result<f64, EvalError> {
    check_pairs(candidates, references)?;
    let sum: f64 = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| rouge_l_pair(&tokenize(c), &tokenize(r)))
        .sum();
    Ok(sum / candidates.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// BLEU at orders 1 to 4.
    pub bleu: [f64; 4],
    pub rouge_l: f64,
    pub n_pairs: usize,
}

pub fn score(candidates: &[String], references: &[String]) -> Result<MetricReport, EvalError> {
    let c: Vec<Vec<&str>> = candidates.iter().map(|s| tokenize(s)).collect();
    let r: Vec<Vec<&str>> = references.iter().map(|s| tokenize(s)).collect();
    let mut bleu = [0.0; 4];
    for (k, b) in bleu.iter_mut().enumerate() {
        *b = bleu_tokens(&c, &r, k + 1)?;
    }
    Ok(MetricReport {
        bleu,
        rouge_l: rouge_l(candidates, references)?,
        n_pairs: candidates.len(),
    })
}

impl MetricReport {
    pub const HEADER: &'static str = "BLEU-1\tBLEU-2\tBLEU-3\tBLEU-4\tROUGE-L";
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [b1, b2, b3, b4] = self.bleu;
        write!(f, "{b1:.3}\t{b2:.3}\t{b3:.3}\t{b4:.3}\t{:.3}", self.rouge_l)
    }
}

/// One model answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub dialogue_id: String,
    pub turn: usize,
    pub answer: String,
}

/// Aligns model outputs with the gold answers of the test split, keyed by
/// `(dialogue_id, turn)`. Every gold turn must have an output.
pub fn evaluate_run(outputs_path: &Path, test_path: &Path) -> Result<MetricReport, EvalError> {
    let outputs: Vec<ModelOutput> = read_jsonl(outputs_path)?;
    let gold = read_dialogues(test_path)?;
    let by_key: BTreeMap<(String, usize), String> = outputs
        .into_iter()
        .map(|o| ((o.dialogue_id, o.turn), o.answer))
        .collect();
    let mut candidates = Vec::new();
    let mut references = Vec::new();
    let mut missing = BTreeSet::new();
    for d in &gold {
        for t in &d.turns {
            match by_key.get(&(d.id.clone(), t.index)) {
                Some(a) => {
                    candidates.push(a.clone());
                    references.push(t.answer.clone());
                }
                None => {
                    missing.insert((d.id.clone(), t.index));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingOutputs(missing.into_iter().collect()));
    }
    score(&candidates, &references)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn brevity_example() {
        let b = bleu(&s(&["the cat sat"]), &s(&["the cat sat down"]), 1).unwrap();
        assert!((b - (1.0f64 - 4.0 / 3.0).exp()).abs() < 1e-12);
        assert!((b - 0.7165).abs() < 1e-4);
    }

    #[test]
    fn identity_and_disjoint() {
        let c = s(&["a b c d e", "x y z w"]);
        for k in 1..=4 {
            assert_eq!(bleu(&c, &c, k).unwrap(), 1.0);
        }
        let b = bleu(&s(&["p q r"]), &s(&["a b c"]), 1).unwrap();
        assert!(b < 1e-8);
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l(&s(&["a b c d"]), &s(&["a c d e"])).unwrap(), 0.75);
        assert_eq!(rouge_l(&s(&["a b"]), &s(&["a b"])).unwrap(), 1.0);
        assert_eq!(rouge_l(&s(&["a b"]), &s(&["c d"])).unwrap(), 0.0);
    }

    #[test]
    fn short_identical_sentences_still_score_one() {
        let c = s(&["yes", "no"]);
        assert_eq!(bleu(&c, &c, 4).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(bleu(&[], &[], 1), Err(EvalError::EmptyCorpus)));
        assert!(matches!(bleu(&s(&["a"]), &s(&["a"]), 5), Err(EvalError::InvalidOrder(5))));
        assert!(matches!(rouge_l(&s(&["a"]), &[]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn report_row() {
        let r = MetricReport {
            bleu: [0.391, 0.2, 0.05, 0.01],
            rouge_l: 0.3,
            n_pairs: 3,
        };
        assert_eq!(r.to_string(), "0.391\t0.200\t0.050\t0.010\t0.300");
    }
}
