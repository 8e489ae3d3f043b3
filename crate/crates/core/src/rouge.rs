//! ROUGE-1, ROUGE-2 and ROUGE-L without stemming or stopword removal.
//!
//! Multi-sentence texts are flattened into one token sequence before
//! scoring. Corpus aggregates are macro-averages over documents.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{flatten, Sentence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        if candidate_total == 0 || reference_total == 0 {
            return RougeScore::default();
        }
        let precision = overlap as f64 / candidate_total as f64;
        let recall = overlap as f64 / reference_total as f64;
        RougeScore {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap score.
///
/// # Panics
/// If `n == 0`.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> RougeScore {
    assert!(n >= 1, "rouge_n needs n >= 1");
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    let cand_total = candidate.len().saturating_sub(n - 1);
    let ref_total = reference.len().saturating_sub(n - 1);
    RougeScore::from_counts(overlap, cand_total, ref_total)
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> RougeScore {
    RougeScore::from_counts(
        lcs_len(candidate, reference),
        candidate.len(),
        reference.len(),
    )
}

/// Evaluation protocol for corpus reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// ROUGE F1 on full predictions.
    F1,
    /// ROUGE recall after truncating the prediction to the gold length.
    LimitedRecall,
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" => Ok(Protocol::F1),
            "recall" | "limited_recall" | "limited-recall" => Ok(Protocol::LimitedRecall),
            other => Err(Error::InvalidArgument(format!(
                "unknown protocol `{other}` (expected f1 or recall)"
            ))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::F1 => "f1",
            Protocol::LimitedRecall => "limited_recall",
        })
    }
}

/// ROUGE-1/2/L values under one protocol, as fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeReport {
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
}

impl RougeReport {
    /// Arithmetic mean of several reports.
    pub fn mean<'a, I: IntoIterator<Item = &'a RougeReport>>(reports: I) -> RougeReport {
        let mut acc = RougeReport::default();
        let mut n = 0usize;
        for r in reports {
            acc.rouge_1 += r.rouge_1;
            acc.rouge_2 += r.rouge_2;
            acc.rouge_l += r.rouge_l;
            n += 1;
        }
        if n > 0 {
            let n = n as f64;
            acc.rouge_1 /= n;
            acc.rouge_2 /= n;
            acc.rouge_l /= n;
        }
        acc
    }
}

/// ROUGE recall of a prediction cut to the gold summary's token length.
pub fn limited_length_recall(predicted: &[Sentence], gold: &[Sentence]) -> RougeReport {
    let gold = flatten(gold);
    let mut pred = flatten(predicted);
    pred.truncate(gold.len());
    RougeReport {
        rouge_1: rouge_n(&pred, &gold, 1).recall,
        rouge_2: rouge_n(&pred, &gold, 2).recall,
        rouge_l: rouge_l(&pred, &gold).recall,
    }
}

/// Scores a single document's prediction.
pub fn score_document(predicted: &[Sentence], gold: &[Sentence], protocol: Protocol) -> RougeReport {
    match protocol {
        Protocol::LimitedRecall => limited_length_recall(predicted, gold),
        Protocol::F1 => {
            let pred = flatten(predicted);
            let gold = flatten(gold);
            RougeReport {
                rouge_1: rouge_n(&pred, &gold, 1).f1,
                rouge_2: rouge_n(&pred, &gold, 2).f1,
                rouge_l: rouge_l(&pred, &gold).f1,
            }
        }
    }
}

/// Macro-averaged corpus report.
pub fn rouge_report<P, G>(predictions: &[P], golds: &[G], protocol: Protocol) -> Result<RougeReport>
where
    P: AsRef<[Sentence]>,
    G: AsRef<[Sentence]>,
{
    if predictions.len() != golds.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} gold summaries",
            predictions.len(),
            golds.len()
        )));
    }
    let per_doc: Vec<RougeReport> = predictions
        .iter()
        .zip(golds)
        .map(|(p, g)| score_document(p.as_ref(), g.as_ref(), protocol))
        .collect();
    Ok(RougeReport::mean(&per_doc))
}
