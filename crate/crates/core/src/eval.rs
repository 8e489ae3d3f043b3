//! Corpus-level evaluation: model, Lead and Oracle rows, checkpoint averaging
//! and the ablation arms.

use std::fmt::Write as _;

use crate::corpus::{Document, Sentence, Vocabulary};
use crate::error::{Error, Result};
use crate::inference::{lead_baseline, summarize};
use crate::model::{BertSum, Checkpoint, ModelConfig, SegmentScheme};
use crate::oracle::{greedy_oracle, Objective};
use crate::rouge::{rouge_report, Protocol, RougeReport};
use crate::train::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub name: String,
    pub report: RougeReport,
}

impl EvalRow {
    pub fn new(name: impl Into<String>, report: RougeReport) -> Self {
        EvalRow {
            name: name.into(),
            report,
        }
    }
}

fn golds(docs: &[Document]) -> Vec<&[Sentence]> {
    docs.iter().map(|d| d.gold_summary.as_slice()).collect()
}

pub fn model_predictions(
    model: &BertSum,
    vocab: &Vocabulary,
    docs: &[Document],
    k: usize,
    blocking: bool,
) -> Result<Vec<Vec<Sentence>>> {
    docs.iter()
        .map(|d| summarize(model, vocab, d, k, blocking).map(|s| s.sentences))
        .collect()
}

pub fn evaluate_model(
    model: &BertSum,
    vocab: &Vocabulary,
    docs: &[Document],
    k: usize,
    blocking: bool,
    protocol: Protocol,
) -> Result<RougeReport> {
    let preds = model_predictions(model, vocab, docs, k, blocking)?;
    rouge_report(&preds, &golds(docs), protocol)
}

/// Evaluates every checkpoint separately and averages the reports.
pub fn evaluate_topk(
    checkpoints: &[Checkpoint],
    docs: &[Document],
    k: usize,
    blocking: bool,
    protocol: Protocol,
) -> Result<RougeReport> {
    if checkpoints.is_empty() {
        return Err(Error::InvalidArgument("no checkpoints to evaluate".into()));
    }
    let reports = checkpoints
        .iter()
        .map(|ck| {
            let model = ck.to_model()?;
            let vocab = ck.vocabulary()?;
            evaluate_model(&model, &vocab, docs, k, blocking, protocol)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RougeReport::mean(&reports))
}

pub fn lead_report(docs: &[Document], k: usize, protocol: Protocol) -> Result<RougeReport> {
    let preds: Vec<Vec<Sentence>> = docs.iter().map(|d| lead_baseline(d, k)).collect();
    rouge_report(&preds, &golds(docs), protocol)
}

/// Scores the greedy oracle selections (in document order).
pub fn oracle_report(docs: &[Document], k: usize, objective: Objective, protocol: Protocol) -> Result<RougeReport> {
    let preds = docs
        .iter()
        .map(|d| {
            let mut idx = greedy_oracle(d, k, objective)?.selected;
            idx.sort_unstable();
            Ok(idx.iter().map(|&i| d.sentences[i].clone()).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    rouge_report(&preds, &golds(docs), protocol)
}

/// Renders rows in ROUGE points with two decimals.
pub fn format_table(rows: &[EvalRow], protocol: Protocol) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>7}  {:>7}  {:>7}   ({protocol})", "Model", "R-1", "R-2", "R-L");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.2}  {:>7.2}  {:>7.2}",
            r.name,
            100.0 * r.report.rouge_1,
            100.0 * r.report.rouge_2,
            100.0 * r.report.rouge_l
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationArm {
    Base,
    NoIntervalSegments,
    NoTrigramBlocking,
}

impl AblationArm {
    pub const ALL: [AblationArm; 3] = [
        AblationArm::Base,
        AblationArm::NoIntervalSegments,
        AblationArm::NoTrigramBlocking,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationArm::Base => "base",
            AblationArm::NoIntervalSegments => "-interval segments",
            AblationArm::NoTrigramBlocking => "-trigram blocking",
        }
    }
}

pub struct AblationData<'a> {
    pub vocab: &'a Vocabulary,
    pub train: &'a [Document],
    pub val: &'a [Document],
    pub test: &'a [Document],
}

/// Trains the base and constant-segment models and scores all three arms.
/// The blocking arm reuses the base checkpoints.
pub fn run_ablation(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    data: &AblationData<'_>,
    k: usize,
    protocol: Protocol,
) -> Result<Vec<EvalRow>> {
    let train_arm = |segments: SegmentScheme| -> Result<Vec<Checkpoint>> {
        let cfg = ModelConfig {
            segments,
            ..model_cfg.clone()
        };
        let model = BertSum::new(cfg)?;
        Ok(train(model, data.vocab, data.train, data.val, train_cfg)?.checkpoints)
    };
    let base = train_arm(SegmentScheme::Interval)?;
    let constant = train_arm(SegmentScheme::Constant)?;
    AblationArm::ALL
        .iter()
        .map(|&arm| {
            let report = match arm {
                AblationArm::Base => evaluate_topk(&base, data.test, k, true, protocol)?,
                AblationArm::NoIntervalSegments => evaluate_topk(&constant, data.test, k, true, protocol)?,
                AblationArm::NoTrigramBlocking => evaluate_topk(&base, data.test, k, false, protocol)?,
            };
            Ok(EvalRow::new(arm.label(), report))
        })
        .collect()
}
