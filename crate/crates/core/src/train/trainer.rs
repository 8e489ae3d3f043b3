use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{encode_input, BertSum, Checkpoint, EncodedInput};
use crate::nn::{Dropout, Graph};

use super::adam::{AdamConfig, AdamState};
use super::schedule::lr_schedule;

fn default_total_steps() -> u64 {
    50_000
}
fn default_warmup() -> u64 {
    10_000
}
fn default_lr_coefficient() -> f64 {
    2e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_accumulation() -> usize {
    2
}
fn default_eval_every() -> u64 {
    1_000
}
fn default_batch_documents() -> usize {
    18
}
fn default_keep_top_k() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_total_steps")]
    pub total_steps: u64,
    #[serde(default = "default_warmup")]
    pub warmup: u64,
    #[serde(default = "default_lr_coefficient")]
    pub lr_coefficient: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    /// Micro-batches whose gradients are averaged per optimizer step.
    #[serde(default = "default_accumulation")]
    pub accumulation: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    /// Documents per micro-batch.
    #[serde(default = "default_batch_documents")]
    pub batch_documents: usize,
    #[serde(default = "default_keep_top_k")]
    pub keep_top_k: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: default_total_steps(),
            warmup: default_warmup(),
            lr_coefficient: default_lr_coefficient(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            accumulation: default_accumulation(),
            eval_every: default_eval_every(),
            batch_documents: default_batch_documents(),
            keep_top_k: default_keep_top_k(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.total_steps == 0 {
            return fail("total_steps must be at least 1");
        }
        if self.warmup == 0 {
            return fail("warmup must be at least 1");
        }
        if self.accumulation == 0 {
            return fail("accumulation must be at least 1");
        }
        if self.eval_every == 0 {
            return fail("eval_every must be at least 1");
        }
        if self.batch_documents == 0 {
            return fail("batch_documents must be at least 1");
        }
        if self.keep_top_k == 0 {
            return fail("keep_top_k must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
}

pub fn write_log(path: impl AsRef<Path>, log: &[LogRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in log {
        let line = serde_json::to_string(rec).expect("log records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A document ready for the model: encoded input plus labels for the
/// sentences that survived truncation.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub input: EncodedInput,
    pub labels: Vec<u8>,
}

/// Encodes labelled documents for `model`.
pub fn prepare_examples(model: &BertSum, vocab: &Vocabulary, docs: &[Document]) -> Result<Vec<Example>> {
    let cfg = model.config();
    docs.iter()
        .map(|doc| {
            let labels = doc.labels.as_ref().ok_or_else(|| Error::Document {
                id: doc.id.clone(),
                msg: "document has no labels; run the oracle first".into(),
            })?;
            let input = encode_input(doc, vocab, cfg.max_positions, cfg.segments);
            let labels = labels[..input.num_sentences()].to_vec();
            Ok(Example {
                id: doc.id.clone(),
                input,
                labels,
            })
        })
        .collect()
}

/// Mean per-document BCE without dropout.
pub fn mean_loss(model: &BertSum, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ex in examples {
        let mut g = Graph::new();
        let loss = model.loss(&mut g, &ex.input, &ex.labels, &mut Dropout::disabled())?;
        total += g.value(loss).item();
    }
    Ok(total / examples.len() as f64)
}

/// Adds to the parameter gradients the mean gradient over
/// `micro_batches`, each micro-batch contributing its mean document loss.
/// Returns the mean loss.
pub fn accumulate_gradients(
    model: &mut BertSum,
    micro_batches: &[Vec<&Example>],
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<f64> {
    let rate = model.config().dropout;
    let mut rng = dropout_rng;
    let mut total = 0.0;
    let n_micro = micro_batches.len() as f64;
    for batch in micro_batches {
        let weight = 1.0 / (batch.len() as f64 * n_micro);
        for ex in batch {
            let mut g = Graph::new();
            let loss = {
                let mut dropout = match rng.as_deref_mut() {
                    Some(r) => Dropout::new(rate, r),
                    None => Dropout::disabled(),
                };
                model.loss(&mut g, &ex.input, &ex.labels, &mut dropout)?
            };
            total += g.value(loss).item() * weight;
            let scaled = g.scale(loss, weight);
            g.backward(scaled, model.params_mut())?;
        }
    }
    Ok(total)
}

/// Keeps the `k` checkpoints with the lowest validation loss; ties favor
/// the earlier step.
#[derive(Debug, Clone)]
pub struct CheckpointPool {
    k: usize,
    entries: Vec<Checkpoint>,
}

impl CheckpointPool {
    pub fn new(k: usize) -> Self {
        CheckpointPool {
            k,
            entries: Vec::new(),
        }
    }

    fn key(c: &Checkpoint) -> (f64, u64) {
        (c.header.val_loss.unwrap_or(f64::INFINITY), c.header.step)
    }

    /// Returns whether the checkpoint was retained.
    pub fn offer(&mut self, ck: Checkpoint) -> bool {
        let key = Self::key(&ck);
        let pos = self
            .entries
            .iter()
            .position(|e| {
                let k = Self::key(e);
                key.0.total_cmp(&k.0).then(key.1.cmp(&k.1)).is_lt()
            })
            .unwrap_or(self.entries.len());
        if pos >= self.k {
            return false;
        }
        self.entries.insert(pos, ck);
        self.entries.truncate(self.k);
        true
    }

    /// Retained checkpoints, best first.
    pub fn entries(&self) -> &[Checkpoint] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Checkpoint> {
        self.entries
    }
}

/// Reported to the observer at each evaluation point.
#[derive(Debug, Clone, Copy)]
pub struct EvalEvent {
    pub step: u64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: BertSum,
    pub optimizer: AdamState,
    /// Retained checkpoints ordered by validation loss, best first.
    pub checkpoints: Vec<Checkpoint>,
    pub log: Vec<LogRecord>,
}

pub fn train(
    model: BertSum,
    vocab: &Vocabulary,
    train_docs: &[Document],
    val_docs: &[Document],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_observer(model, vocab, train_docs, val_docs, cfg, |_| ControlFlow::Continue(()))
}

/// Like [`train`], calling `observer` after every evaluation; returning
/// `ControlFlow::Break` ends training after that evaluation.
pub fn train_with_observer<F>(
    mut model: BertSum,
    vocab: &Vocabulary,
    train_docs: &[Document],
    val_docs: &[Document],
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EvalEvent) -> ControlFlow<()>,
{
    cfg.validate()?;
    let train_set = prepare_examples(&model, vocab, train_docs)?;
    let val_set = prepare_examples(&model, vocab, val_docs)?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    order.shuffle(&mut order_rng);
    let mut cursor = 0usize;
    let mut next_batch = |order_rng: &mut ChaCha8Rng| -> Vec<&Example> {
        (0..cfg.batch_documents)
            .map(|_| {
                if cursor == order.len() {
                    order.shuffle(order_rng);
                    cursor = 0;
                }
                cursor += 1;
                &train_set[order[cursor - 1]]
            })
            .collect()
    };

    let mut adam = AdamState::new(model.params(), cfg.adam());
    let mut pool = CheckpointPool::new(cfg.keep_top_k);
    let mut log = Vec::new();
    model.params_mut().zero_grad();

    for step in 1..=cfg.total_steps {
        let micro: Vec<Vec<&Example>> = (0..cfg.accumulation)
            .map(|_| next_batch(&mut order_rng))
            .collect();
        let train_loss = accumulate_gradients(&mut model, &micro, Some(&mut dropout_rng))?;
        let lr = lr_schedule(step, cfg.warmup, cfg.lr_coefficient)?;
        adam.step(model.params_mut(), lr);

        let mut record = LogRecord {
            step,
            lr,
            train_loss,
            val_loss: None,
        };
        let mut stop = false;
        if step % cfg.eval_every == 0 || step == cfg.total_steps {
            let val_loss = mean_loss(&model, &val_set)?;
            record.val_loss = Some(val_loss);
            pool.offer(Checkpoint::capture(
                &model,
                vocab,
                step,
                Some(val_loss),
                Some(adam.snapshot(model.params())),
            ));
            stop = observer(&EvalEvent {
                step,
                train_loss,
                val_loss,
            })
            .is_break();
        }
        log.push(record);
        if stop {
            break;
        }
    }

    Ok(TrainOutcome {
        model,
        optimizer: adam,
        checkpoints: pool.into_entries(),
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;
    use crate::model::{HeadKind, ModelConfig, SegmentScheme};

    fn docs() -> Vec<Document> {
        let raw = [
            (&["red fox .", "blue sky today .", "red fox runs ."][..], vec![1, 0, 1]),
            (&["green tree .", "red fox .", "dark night ."][..], vec![0, 1, 0]),
            (&["a red fox .", "cold rain ."][..], vec![1, 0]),
            (&["warm sun .", "red fox hides .", "blue sky ."][..], vec![0, 1, 0]),
        ];
        raw.iter()
            .enumerate()
            .map(|(i, (src, labels))| {
                let mut d = Document::from_text(format!("d{i}"), src, &["red fox"]).unwrap();
                d.labels = Some(labels.clone());
                d
            })
            .collect()
    }

    fn model(vocab: &Vocabulary, dropout: f64) -> BertSum {
        BertSum::new(ModelConfig {
            vocab_size: vocab.len(),
            d_model: 8,
            n_enc_layers: 1,
            n_heads: 2,
            d_ff: 16,
            max_positions: 32,
            head_kind: HeadKind::Classifier,
            n_head_layers: 1,
            dropout,
            segments: SegmentScheme::Interval,
            seed: 1,
        })
        .unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            total_steps: 6,
            warmup: 2,
            lr_coefficient: 1e-2,
            accumulation: 2,
            eval_every: 2,
            batch_documents: 2,
            keep_top_k: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn unlabeled_document_is_rejected() {
        let mut d = docs();
        d[2].labels = None;
        let v = build_vocab(&d, 100).unwrap();
        let err = train(model(&v, 0.0), &v, &d, &d, &small_cfg()).unwrap_err();
        assert!(matches!(err, Error::Document { ref id, .. } if id == "d2"));
    }

    #[test]
    fn single_final_checkpoint_when_eval_interval_exceeds_steps() {
        let d = docs();
        let v = build_vocab(&d, 100).unwrap();
        let cfg = TrainConfig {
            eval_every: 100,
            ..small_cfg()
        };
        let out = train(model(&v, 0.0), &v, &d, &d, &cfg).unwrap();
        assert_eq!(out.checkpoints.len(), 1);
        assert_eq!(out.checkpoints[0].header.step, 6);
        assert_eq!(out.log.len(), 6);
        assert!(out.log[..5].iter().all(|r| r.val_loss.is_none()));
        assert!(out.log[5].val_loss.is_some());
    }

    #[test]
    fn log_follows_schedule() {
        let d = docs();
        let v = build_vocab(&d, 100).unwrap();
        let cfg = small_cfg();
        let out = train(model(&v, 0.1), &v, &d, &d, &cfg).unwrap();
        for r in &out.log {
            assert_eq!(r.lr, lr_schedule(r.step, cfg.warmup, cfg.lr_coefficient).unwrap());
            assert!(r.train_loss.is_finite());
        }
        assert_eq!(out.checkpoints.len(), 2);
        let retained: Vec<f64> = out.checkpoints.iter().map(|c| c.header.val_loss.unwrap()).collect();
        assert!(retained[0] <= retained[1]);
        for r in &out.log {
            if let Some(vl) = r.val_loss {
                if !out.checkpoints.iter().any(|c| c.header.step == r.step) {
                    assert!(retained[0] <= vl);
                }
            }
        }
    }

    #[test]
    fn pool_keeps_three_smallest() {
        let d = docs();
        let v = build_vocab(&d, 100).unwrap();
        let m = model(&v, 0.0);
        let losses = [0.9, 0.4, 0.7, 0.2, 0.8, 0.4, 0.3];
        let mut pool = CheckpointPool::new(3);
        for (i, &l) in losses.iter().enumerate() {
            pool.offer(Checkpoint::capture(&m, &v, i as u64 + 1, Some(l), None));
        }
        let kept: Vec<(f64, u64)> = pool
            .entries()
            .iter()
            .map(|c| (c.header.val_loss.unwrap(), c.header.step))
            .collect();
        assert_eq!(kept, vec![(0.2, 4), (0.3, 7), (0.4, 2)]);
    }

    #[test]
    fn accumulation_equals_mean_of_micro_batch_gradients() {
        let d = docs();
        let v = build_vocab(&d, 100).unwrap();
        let base = model(&v, 0.0);
        let ex = prepare_examples(&base, &v, &d).unwrap();
        let b1 = vec![&ex[0], &ex[1]];
        let b2 = vec![&ex[2], &ex[3]];

        let mut joint = base.clone();
        accumulate_gradients(&mut joint, &[b1.clone(), b2.clone()], None).unwrap();

        let mut separate = base.clone();
        accumulate_gradients(&mut separate, &[b1], None).unwrap();
        let first: Vec<_> = separate.params().iter().map(|p| p.grad.clone()).collect();
        separate.params_mut().zero_grad();
        accumulate_gradients(&mut separate, &[b2], None).unwrap();
        for (p, g1) in separate.params_mut().iter_mut().zip(&first) {
            for (x, y) in p.grad.data_mut().iter_mut().zip(g1.data()) {
                *x = 0.5 * (*x + y);
            }
        }
        for (a, b) in joint.params().iter().zip(separate.params().iter()) {
            for (x, y) in a.grad.data().iter().zip(b.grad.data()) {
                assert!((x - y).abs() <= 1e-10);
            }
        }

        let cfg = AdamConfig::default();
        let mut adam_a = AdamState::new(joint.params(), cfg);
        let mut adam_b = AdamState::new(separate.params(), cfg);
        adam_a.step(joint.params_mut(), 1e-3);
        adam_b.step(separate.params_mut(), 1e-3);
        for (a, b) in joint.params().iter().zip(separate.params().iter()) {
            for (x, y) in a.value.data().iter().zip(b.value.data()) {
                assert!((x - y).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn reproducible_with_dropout() {
        let d = docs();
        let v = build_vocab(&d, 100).unwrap();
        let a = train(model(&v, 0.1), &v, &d, &d, &small_cfg()).unwrap();
        let b = train(model(&v, 0.1), &v, &d, &d, &small_cfg()).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.checkpoints, b.checkpoints);
    }

    #[test]
    fn observer_can_stop_training() {
        let d = docs();
        let v = build_vocab(&d, 100).unwrap();
        let out = train_with_observer(model(&v, 0.0), &v, &d, &d, &small_cfg(), |e| {
            if e.step >= 4 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert_eq!(out.log.len(), 4);
    }

    #[test]
    fn config_rejects_zero_accumulation() {
        let cfg = TrainConfig {
            accumulation: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
