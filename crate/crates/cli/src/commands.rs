use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use bertsum::config::RunConfig;
use bertsum::corpus::{
    self, build_vocab, document_from_raw, document_from_story, read_documents, read_records, word_tokens,
    write_records, Document, Record, Sentence, Vocabulary,
};
use bertsum::eval::{format_table, lead_report, oracle_report, run_ablation, AblationData, EvalRow};
use bertsum::inference::summarize_all;
use bertsum::model::{BertSum, Checkpoint};
use bertsum::oracle::{label_corpus, Objective};
use bertsum::rouge::{rouge_report, Protocol, RougeReport};
use bertsum::synth::{generate, generate_labeled, SynthConfig};
use bertsum::train::{train as run_training, write_log};
use bertsum::Error;

const CHECKPOINT_LIST: &str = "checkpoints.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Data,
    Config,
}

impl Kind {
    pub fn label(self) -> &'static str {
        match self {
            Kind::Data => "data",
            Kind::Config => "config",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Kind::Data => 3,
            Kind::Config => 4,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub message: String,
}

impl Failure {
    fn data(message: impl Into<String>) -> Self {
        Failure {
            kind: Kind::Data,
            message: message.into(),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        Failure {
            kind: Kind::Config,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::Config(_) | Error::CheckpointMismatch { .. } | Error::CorruptCheckpoint(_) => Kind::Config,
            _ => Kind::Data,
        };
        Failure {
            kind,
            message: e.to_string().split_whitespace().collect::<Vec<_>>().join(" "),
        }
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::data(format!("{}: {e}", path.display()))
}

pub fn preprocess(input: &Path, out: &Path, vocab_out: Option<&Path>, max_vocab: usize) -> CmdResult {
    let docs = if input.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(input)
            .map_err(|e| io_failure(input, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        files
            .iter()
            .map(|p| {
                let text = fs::read_to_string(p).map_err(|e| io_failure(p, e))?;
                let id = p.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
                Ok(document_from_story(id, &text)?)
            })
            .collect::<CmdResult<Vec<_>>>()?
    } else {
        let text = fs::read_to_string(input).map_err(|e| io_failure(input, e))?;
        let mut docs = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            docs.push(raw_line(line, n + 1)?);
        }
        docs
    };
    corpus::write_documents(out, &docs)?;
    if let Some(path) = vocab_out {
        build_vocab(&docs, max_vocab)?.save(path)?;
    }
    println!("wrote {} documents to {}", docs.len(), out.display());
    Ok(())
}

fn raw_line(line: &str, line_no: usize) -> CmdResult<Document> {
    let bad = |field: &str, msg: &str| Failure::data(format!("line {line_no}: field `{field}`: {msg}"));
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| bad("<record>", &e.to_string()))?;
    let field = |name: &str| -> CmdResult<String> {
        match value.get(name) {
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(serde_json::Value::Array(items)) => items
                .iter()
                .map(|v| v.as_str().map(str::to_string).ok_or_else(|| bad(name, "expected strings")))
                .collect::<CmdResult<Vec<_>>>()
                .map(|v| v.join(" ")),
            _ => Err(bad(name, "missing or not a string")),
        }
    };
    Ok(document_from_raw(field("id")?, &field("text")?, &field("summary")?)?)
}

pub fn oracle(input: &Path, out: &Path, max_sentences: usize, objective: Objective) -> CmdResult {
    let stats = label_corpus(input, out, max_sentences, objective)?;
    println!(
        "labeled {} documents: {:.2} sentences selected on average, mean objective {:.4}",
        stats.documents, stats.mean_selected, stats.mean_score
    );
    Ok(())
}

fn load_run_config(path: &Path) -> CmdResult<RunConfig> {
    Ok(RunConfig::load(path)?)
}

fn load_or_build_vocab(cfg: &RunConfig, train_docs: &[Document]) -> CmdResult<Vocabulary> {
    match &cfg.paths.vocab {
        Some(p) => Ok(Vocabulary::load(p)?),
        None => Ok(build_vocab(train_docs, cfg.model.max_vocab)?),
    }
}

pub fn train(config: &Path, train: Option<PathBuf>, val: Option<PathBuf>, out_dir: Option<PathBuf>) -> CmdResult {
    let mut cfg = load_run_config(config)?;
    if let Some(p) = train {
        cfg.paths.train = p;
    }
    if let Some(p) = val {
        cfg.paths.val = p;
    }
    if let Some(p) = out_dir {
        cfg.paths.out_dir = p;
    }
    cfg.check_inputs()?;
    let train_docs = read_documents(&cfg.paths.train)?;
    let val_docs = read_documents(&cfg.paths.val)?;
    let vocab = load_or_build_vocab(&cfg, &train_docs)?;
    let model = BertSum::new(cfg.model.to_config(vocab.len()))?;

    let outcome = run_training(model, &vocab, &train_docs, &val_docs, &cfg.train)?;

    let dir = &cfg.paths.out_dir;
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    remove_stale_checkpoints(dir)?;
    vocab.save(dir.join("vocab.txt"))?;
    write_log(dir.join("train_log.jsonl"), &outcome.log)?;
    let mut names = Vec::new();
    for ck in &outcome.checkpoints {
        let name = format!("ckpt-step{:06}.bin", ck.header.step);
        ck.save(dir.join(&name))?;
        names.push(name);
    }
    let list = dir.join(CHECKPOINT_LIST);
    fs::write(&list, names.join("\n") + "\n").map_err(|e| io_failure(&list, e))?;
    for (ck, name) in outcome.checkpoints.iter().zip(&names) {
        println!(
            "kept {name} (step {}, val_loss {:.6})",
            ck.header.step,
            ck.header.val_loss.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn remove_stale_checkpoints(dir: &Path) -> CmdResult {
    for entry in fs::read_dir(dir).map_err(|e| io_failure(dir, e))?.flatten() {
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with("ckpt-step") && name.ends_with(".bin") {
            fs::remove_file(entry.path()).map_err(|e| io_failure(&entry.path(), e))?;
        }
    }
    Ok(())
}

fn run_dir_checkpoints(dir: &Path) -> CmdResult<Vec<PathBuf>> {
    let list = dir.join(CHECKPOINT_LIST);
    let text = fs::read_to_string(&list).map_err(|e| io_failure(&list, e))?;
    let paths: Vec<PathBuf> = text.lines().filter(|l| !l.trim().is_empty()).map(|l| dir.join(l.trim())).collect();
    if paths.is_empty() {
        return Err(Failure::data(format!("{}: no checkpoints listed", list.display())));
    }
    Ok(paths)
}

pub struct EvalRequest {
    pub checkpoints: Vec<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub test: PathBuf,
    pub protocol: Protocol,
    pub k: usize,
    pub blocking: bool,
    pub threads: usize,
}

fn predict(ck: &Checkpoint, docs: &[Document], k: usize, blocking: bool, threads: usize) -> CmdResult<Vec<Vec<Sentence>>> {
    let model = ck.to_model()?;
    let vocab = ck.vocabulary()?;
    Ok(summarize_all(&model, &vocab, docs, k, blocking, threads)?
        .into_iter()
        .map(|s| s.sentences)
        .collect())
}

pub fn eval(req: EvalRequest) -> CmdResult {
    let protocol = req.protocol;
    let paths = match &req.run_dir {
        Some(dir) => run_dir_checkpoints(dir)?,
        None => req.checkpoints.clone(),
    };
    let checkpoints = paths.iter().map(Checkpoint::load).collect::<Result<Vec<_>, _>>()?;
    let docs = read_documents(&req.test)?;
    let golds: Vec<&[Sentence]> = docs.iter().map(|d| d.gold_summary.as_slice()).collect();

    let mut per_checkpoint = Vec::new();
    for ck in &checkpoints {
        let preds = predict(ck, &docs, req.k, req.blocking, req.threads)?;
        per_checkpoint.push(rouge_report(&preds, &golds, protocol)?);
    }
    let head = checkpoints[0].header.model.head_kind;
    let label = if checkpoints.len() > 1 {
        format!("BertSum+{head} (mean of {})", checkpoints.len())
    } else {
        format!("BertSum+{head}")
    };
    let rows = [
        EvalRow::new("Oracle", oracle_report(&docs, req.k, Objective::default(), protocol)?),
        EvalRow::new(format!("Lead-{}", req.k), lead_report(&docs, req.k, protocol)?),
        EvalRow::new(label, RougeReport::mean(&per_checkpoint)),
    ];
    print!("{}", format_table(&rows, protocol));
    Ok(())
}

pub fn summarize(checkpoint: &Path, input: &Path, out: &Path, k: usize, blocking: bool, threads: usize) -> CmdResult {
    let ck = Checkpoint::load(checkpoint)?;
    let docs = read_documents(input)?;
    let mut records = read_records(input)?;
    let model = ck.to_model()?;
    let vocab = ck.vocabulary()?;
    let summaries = summarize_all(&model, &vocab, &docs, k, blocking, threads)?;
    for (rec, s) in records.iter_mut().zip(&summaries) {
        let chosen = &s.selection.chosen;
        rec.pred = Some(chosen.iter().map(|&i| rec.src[i].clone()).collect());
        rec.pred_indices = Some(chosen.clone());
    }
    write_records(out, &records)?;
    println!("wrote {} summaries to {}", records.len(), out.display());
    Ok(())
}

fn sentences_of(lines: &[String]) -> Vec<Sentence> {
    lines.iter().map(|s| word_tokens(s)).filter(|s| !s.is_empty()).collect()
}

pub fn rouge(pred: &Path, gold: &Path, protocol: Protocol) -> CmdResult {
    let preds = read_records(pred)?;
    let golds = read_records(gold)?;
    if preds.len() != golds.len() {
        return Err(Failure::data(format!(
            "{} predictions for {} gold records",
            preds.len(),
            golds.len()
        )));
    }
    let by_id: HashMap<&str, &Record> = golds.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut p_sents = Vec::with_capacity(preds.len());
    let mut g_sents = Vec::with_capacity(preds.len());
    for p in &preds {
        let g = by_id
            .get(p.id.as_str())
            .ok_or_else(|| Failure::data(format!("prediction `{}` has no gold record", p.id)))?;
        p_sents.push(sentences_of(p.pred.as_ref().unwrap_or(&p.tgt)));
        g_sents.push(sentences_of(&g.tgt));
    }
    let r = rouge_report(&p_sents, &g_sents, protocol)?;
    println!("{:<8} {:>7}   ({protocol}, {} documents)", "metric", "score", preds.len());
    println!("{:<8} {:>7.4}", "ROUGE-1", r.rouge_1);
    println!("{:<8} {:>7.4}", "ROUGE-2", r.rouge_2);
    println!("{:<8} {:>7.4}", "ROUGE-L", r.rouge_l);
    Ok(())
}

pub fn ablate(config: &Path) -> CmdResult {
    let cfg = load_run_config(config)?;
    cfg.check_inputs()?;
    let test_path = cfg
        .paths
        .test
        .as_ref()
        .ok_or_else(|| Failure::config("ablation needs `paths.test`"))?;
    let train_docs = read_documents(&cfg.paths.train)?;
    let val_docs = read_documents(&cfg.paths.val)?;
    let test_docs = read_documents(test_path)?;
    let vocab = load_or_build_vocab(&cfg, &train_docs)?;
    let data = AblationData {
        vocab: &vocab,
        train: &train_docs,
        val: &val_docs,
        test: &test_docs,
    };
    let rows = run_ablation(&cfg.model.to_config(vocab.len()), &cfg.train, &data, cfg.k, cfg.protocol)?;
    print!("{}", format_table(&rows, cfg.protocol));
    Ok(())
}

pub fn synth(out: &Path, documents: usize, seed: u64, redundancy: f64, labeled: bool) -> CmdResult {
    let cfg = SynthConfig {
        documents,
        seed,
        redundancy,
        ..SynthConfig::default()
    };
    let docs = if labeled { generate_labeled(&cfg)? } else { generate(&cfg)? };
    corpus::write_documents(out, &docs)?;
    println!("wrote {} documents to {}", docs.len(), out.display());
    Ok(())
}
