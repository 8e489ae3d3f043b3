//! Greedy extractive oracle: turns abstractive gold summaries into 0/1
//! sentence labels.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{self, Document, Sentence};
use crate::error::{Error, Result};
use crate::rouge::{rouge_l, rouge_n};

/// Score the greedy search maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Mean of ROUGE-1 F1 and ROUGE-2 F1.
    #[default]
    R1r2Mean,
    R1,
    R2,
    /// Mean of ROUGE-1, ROUGE-2 and ROUGE-L F1.
    R1r2rlMean,
}

impl Objective {
    pub fn score(&self, candidate: &[String], gold: &[String]) -> f64 {
        match self {
            Objective::R1r2Mean => {
                0.5 * (rouge_n(candidate, gold, 1).f1 + rouge_n(candidate, gold, 2).f1)
            }
            Objective::R1 => rouge_n(candidate, gold, 1).f1,
            Objective::R2 => rouge_n(candidate, gold, 2).f1,
            Objective::R1r2rlMean => {
                (rouge_n(candidate, gold, 1).f1
                    + rouge_n(candidate, gold, 2).f1
                    + rouge_l(candidate, gold).f1)
                    / 3.0
            }
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r1r2-mean" => Ok(Objective::R1r2Mean),
            "r1" => Ok(Objective::R1),
            "r2" => Ok(Objective::R2),
            "r1r2rl-mean" => Ok(Objective::R1r2rlMean),
            other => Err(Error::InvalidArgument(format!(
                "unknown oracle objective `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::R1r2Mean => "r1r2-mean",
            Objective::R1 => "r1",
            Objective::R2 => "r2",
            Objective::R1r2rlMean => "r1r2rl-mean",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Sentence indices in the order they were picked.
    pub selected: Vec<usize>,
    pub labels: Vec<u8>,
    pub achieved_score: f64,
    /// Objective value after each accepted pick.
    pub trace: Vec<f64>,
}

/// Concatenates the chosen sentences in document order.
pub fn concat_in_doc_order(sentences: &[Sentence], chosen: &[usize]) -> Vec<String> {
    let mut idx = chosen.to_vec();
    idx.sort_unstable();
    idx.iter().flat_map(|&i| sentences[i].iter().cloned()).collect()
}

/// Greedily adds the sentence that most improves `objective`, stopping when
/// nothing strictly improves it or `max_sentences` are chosen. Ties go to the
/// lowest sentence index.
pub fn greedy_oracle(doc: &Document, max_sentences: usize, objective: Objective) -> Result<OracleResult> {
    if doc.gold_summary.is_empty() {
        return Err(Error::Document {
            id: doc.id.clone(),
            msg: "gold summary is empty".into(),
        });
    }
    if max_sentences == 0 {
        return Err(Error::InvalidArgument("max_sentences must be at least 1".into()));
    }
    let gold = doc.gold_tokens();
    let mut selected: Vec<usize> = Vec::new();
    let mut current = 0.0;
    let mut trace = Vec::new();

    while selected.len() < max_sentences {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..doc.len()).filter(|i| !selected.contains(i)) {
            let mut trial = selected.clone();
            trial.push(i);
            let score = objective.score(&concat_in_doc_order(&doc.sentences, &trial), &gold);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        match best {
            Some((i, score)) if score > current => {
                selected.push(i);
                current = score;
                trace.push(score);
            }
            _ => break,
        }
    }

    let mut labels = vec![0u8; doc.len()];
    for &i in &selected {
        labels[i] = 1;
    }
    Ok(OracleResult {
        selected,
        labels,
        achieved_score: current,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct OracleStats {
    pub documents: usize,
    pub mean_selected: f64,
    pub mean_score: f64,
}

/// Fills `labels` for each document in place.
pub fn label_documents(
    docs: &mut [Document],
    max_sentences: usize,
    objective: Objective,
) -> Result<OracleStats> {
    let mut stats = OracleStats::default();
    for doc in docs.iter_mut() {
        let res = greedy_oracle(doc, max_sentences, objective)?;
        stats.documents += 1;
        stats.mean_selected += res.selected.len() as f64;
        stats.mean_score += res.achieved_score;
        doc.labels = Some(res.labels);
    }
    if stats.documents > 0 {
        stats.mean_selected /= stats.documents as f64;
        stats.mean_score /= stats.documents as f64;
    }
    Ok(stats)
}

/// Labels every document of a record file and writes the result.
pub fn label_corpus(
    in_path: impl AsRef<Path>,
    out_path: impl AsRef<Path>,
    max_sentences: usize,
    objective: Objective,
) -> Result<OracleStats> {
    let mut docs = corpus::read_documents(in_path)?;
    let stats = label_documents(&mut docs, max_sentences, objective)?;
    corpus::write_documents(out_path, &docs)?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(src: &[&str], tgt: &[&str]) -> Document {
        Document::from_text("t", src, tgt).unwrap()
    }

    #[test]
    fn verbatim_gold_sentence_wins() {
        let d = doc(
            &["alpha beta gamma .", "delta epsilon .", "the gold sentence here ."],
            &["the gold sentence here ."],
        );
        let r = greedy_oracle(&d, 3, Objective::R1r2Mean).unwrap();
        assert_eq!(r.selected, vec![2]);
        assert_eq!(r.labels, vec![0, 0, 1]);
        assert_eq!(r.achieved_score, 1.0);
    }

    #[test]
    fn disjoint_gold_selects_nothing() {
        let d = doc(&["a b c", "d e f"], &["x y z"]);
        let r = greedy_oracle(&d, 3, Objective::R1r2Mean).unwrap();
        assert!(r.selected.is_empty());
        assert_eq!(r.labels, vec![0, 0]);
        assert_eq!(r.achieved_score, 0.0);
    }

    #[test]
    fn empty_gold_is_error() {
        let d = doc(&["a b c"], &[]);
        assert!(matches!(
            greedy_oracle(&d, 3, Objective::R1r2Mean),
            Err(Error::Document { .. })
        ));
    }

    #[test]
    fn ties_prefer_lowest_index() {
        let d = doc(&["x y", "a b", "a b"], &["a b"]);
        let r = greedy_oracle(&d, 3, Objective::R1r2Mean).unwrap();
        assert_eq!(r.selected, vec![1]);
    }

    #[test]
    fn respects_cap_and_trace_is_increasing() {
        let d = doc(
            &["a b c", "d e f", "g h i", "j k l"],
            &["a b c d e f g h i j k l"],
        );
        let r = greedy_oracle(&d, 2, Objective::R1r2Mean).unwrap();
        assert_eq!(r.selected.len(), 2);
        assert!(r.trace.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*r.trace.last().unwrap(), r.achieved_score);
    }

    #[test]
    fn single_sentence_labels() {
        let d = doc(&["a b c"], &["a q"]);
        assert_eq!(greedy_oracle(&d, 3, Objective::R1r2Mean).unwrap().labels, vec![1]);
        let d = doc(&["a b c"], &["q"]);
        assert_eq!(greedy_oracle(&d, 3, Objective::R1r2Mean).unwrap().labels, vec![0]);
    }

    #[test]
    fn label_corpus_stats() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.jsonl");
        let output = dir.path().join("out.jsonl");
        let docs = vec![
            doc(&["noise words .", "gold one ."], &["gold one ."]),
            doc(&["gold two here .", "other stuff ."], &["gold two here ."]),
        ];
        corpus::write_documents(&input, &docs).unwrap();
        let stats = label_corpus(&input, &output, 3, Objective::R1r2Mean).unwrap();
        assert_eq!(stats.documents, 2);
        assert_eq!(stats.mean_score, 1.0);
        assert_eq!(stats.mean_selected, 1.0);
        let back = corpus::read_documents(&output).unwrap();
        assert_eq!(back[0].labels, Some(vec![0, 1]));
        assert_eq!(back[1].labels, Some(vec![1, 0]));
    }

    #[test]
    fn objective_names_round_trip() {
        for o in [Objective::R1r2Mean, Objective::R1, Objective::R2, Objective::R1r2rlMean] {
            assert_eq!(o.to_string().parse::<Objective>().unwrap(), o);
        }
    }
}
