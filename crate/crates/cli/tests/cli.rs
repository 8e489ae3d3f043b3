use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bertsum::corpus::{read_documents, read_records};
use bertsum::eval::lead_report;
use bertsum::rouge::Protocol;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bertsum"));
    c.env("BERTSUM_THREADS", "2");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", stderr(o));
}

fn assert_one_line_error(o: &Output, code: i32, kind: &str) {
    assert_eq!(o.status.code(), Some(code), "stderr: {}", stderr(o));
    let err = stderr(o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error[{kind}]: ")), "{err}");
}

fn synth(dir: &Path, name: &str, docs: usize, seed: u64) -> PathBuf {
    let path = dir.join(name);
    let (n, s) = (docs.to_string(), seed.to_string());
    assert_ok(&run(&["synth", "--out", p(&path), "--documents", &n, "--seed", &s, "--redundancy", "0.3", "--labeled"]));
    path
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let cfg = format!(
        r#"schema_version = 1
protocol = "f1"
{extra}
[model]
d_model = 16
n_enc_layers = 1
n_heads = 2
d_ff = 32
head_kind = "inter_transformer"
n_head_layers = 1
dropout = 0.0
seed = 1

[train]
total_steps = 20
warmup = 5
lr_coefficient = 0.05
eval_every = 5
batch_documents = 4
accumulation = 2
keep_top_k = 2
seed = 3

[paths]
train = "train.jsonl"
val = "val.jsonl"
test = "test.jsonl"
out_dir = "run"
"#
    );
    let path = dir.join("run.toml");
    fs::write(&path, cfg).unwrap();
    path
}

fn table_row(table: &str, name: &str) -> Vec<f64> {
    let line = table.lines().find(|l| l.starts_with(name)).unwrap_or_else(|| panic!("no {name} row in\n{table}"));
    line[name.len()..].split_whitespace().filter_map(|t| t.parse().ok()).collect()
}

#[test]
fn rouge_of_gold_against_itself_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d.jsonl", 5, 0);
    let o = run(&["rouge", "--pred", p(&data), "--gold", p(&data)]);
    assert_ok(&o);
    let out = stdout(&o);
    for m in ["ROUGE-1", "ROUGE-2", "ROUGE-L"] {
        let line = out.lines().find(|l| l.starts_with(m)).unwrap();
        assert!(line.ends_with("1.0000"), "{line}");
    }
}

#[test]
fn exit_codes_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    assert_one_line_error(&run(&["rouge", "--bogus"]), 2, "usage");
    assert_one_line_error(&run(&["summarize", "--k", "0", "--checkpoint", "x", "--in", "y", "--out", "z"]), 2, "usage");

    let missing = dir.path().join("missing.jsonl");
    assert_one_line_error(&run(&["rouge", "--pred", p(&missing), "--gold", p(&missing)]), 3, "data");

    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\": 1}\n").unwrap();
    assert_one_line_error(&run(&["oracle", "--in", p(&bad), "--out", p(&dir.path().join("o.jsonl"))]), 3, "data");

    let cfg = write_config(dir.path(), "surprise = true");
    assert_one_line_error(&run(&["train", "--config", p(&cfg)]), 4, "config");

    let ck = dir.path().join("junk.ckpt");
    fs::write(&ck, b"not a checkpoint").unwrap();
    let data = synth(dir.path(), "d.jsonl", 3, 0);
    let out = dir.path().join("s.jsonl");
    assert_one_line_error(&run(&["summarize", "--checkpoint", p(&ck), "--in", p(&data), "--out", p(&out)]), 4, "config");
}

#[test]
fn unlabeled_training_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let unlabeled = dir.path().join("train.jsonl");
    assert_ok(&run(&["synth", "--out", p(&unlabeled), "--documents", "4"]));
    fs::copy(&unlabeled, dir.path().join("val.jsonl")).unwrap();
    fs::copy(&unlabeled, dir.path().join("test.jsonl")).unwrap();
    let cfg = write_config(dir.path(), "");
    let o = run(&["train", "--config", p(&cfg)]);
    assert_one_line_error(&o, 3, "data");
    assert!(stderr(&o).contains("synth-00000"));
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let raw = synth(d, "raw.jsonl", 40, 1);
    // Drop labels, then put them back with the oracle subcommand.
    let stripped = d.join("stripped.jsonl");
    let docs = read_documents(&raw).unwrap();
    let mut lines = String::new();
    for doc in &docs {
        let mut rec = doc.to_record();
        rec.labels = None;
        lines.push_str(&serde_json::to_string(&rec).unwrap());
        lines.push('\n');
    }
    fs::write(&stripped, lines).unwrap();
    let labeled = d.join("labeled.jsonl");
    let o = run(&["oracle", "--in", p(&stripped), "--out", p(&labeled), "--max-sentences", "3"]);
    assert_ok(&o);
    assert_eq!(read_documents(&labeled).unwrap(), docs);

    let all = fs::read_to_string(&labeled).unwrap();
    let rows: Vec<&str> = all.lines().collect();
    fs::write(d.join("train.jsonl"), rows[..30].join("\n")).unwrap();
    fs::write(d.join("val.jsonl"), rows[30..35].join("\n")).unwrap();
    fs::write(d.join("test.jsonl"), rows[35..].join("\n")).unwrap();
    let cfg = write_config(d, "");

    assert_ok(&run(&["train", "--config", p(&cfg)]));
    let run_dir = d.join("run");
    let listed = fs::read_to_string(run_dir.join("checkpoints.txt")).unwrap();
    assert_eq!(listed.lines().count(), 2);
    let log = fs::read_to_string(run_dir.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 20);
    let first_ck = run_dir.join(listed.lines().next().unwrap());
    let ck_bytes = fs::read(&first_ck).unwrap();

    // Idempotent retraining.
    assert_ok(&run(&["train", "--config", p(&cfg)]));
    assert_eq!(fs::read(&first_ck).unwrap(), ck_bytes);

    let test = d.join("test.jsonl");
    let out1 = d.join("pred1.jsonl");
    let out2 = d.join("pred2.jsonl");
    for out in [&out1, &out2] {
        assert_ok(&run(&["summarize", "--checkpoint", p(&first_ck), "--in", p(&test), "--out", p(out), "--k", "3", "--blocking", "on"]));
    }
    assert_eq!(fs::read(&out1).unwrap(), fs::read(&out2).unwrap());
    for rec in read_records(&out1).unwrap() {
        let idx = rec.pred_indices.unwrap();
        let pred = rec.pred.unwrap();
        assert!(!idx.is_empty() && idx.len() <= 3);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(pred, idx.iter().map(|&i| rec.src[i].clone()).collect::<Vec<_>>());
    }
    let o = run(&["rouge", "--pred", p(&out1), "--gold", p(&test), "--protocol", "recall"]);
    assert_ok(&o);
    assert!(stdout(&o).contains("limited_recall"));

    let o = run(&["eval", "--run-dir", p(&run_dir), "--test", p(&test)]);
    assert_ok(&o);
    let table = stdout(&o);
    let lead = table_row(&table, "Lead-3");
    let oracle = table_row(&table, "Oracle");
    let want = lead_report(&read_documents(&test).unwrap(), 3, Protocol::F1).unwrap();
    assert_eq!(lead[0], (100.0 * want.rouge_1 * 100.0).round() / 100.0, "{table}");
    assert!(oracle[0] >= lead[0], "{table}");
    assert!(table.contains("BertSum+inter_transformer (mean of 2)"), "{table}");

    let o = run(&["eval", "--checkpoint", p(&first_ck), "--test", p(&test), "--blocking", "off"]);
    assert_ok(&o);
    assert!(stdout(&o).contains("BertSum+inter_transformer "));
}

#[test]
fn ablate_prints_three_arms() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "train.jsonl", 12, 2);
    synth(d, "val.jsonl", 4, 3);
    synth(d, "test.jsonl", 4, 4);
    let cfg = write_config(d, "");
    let o = run(&["ablate", "--config", p(&cfg)]);
    assert_ok(&o);
    let out = stdout(&o);
    for arm in ["base", "-interval segments", "-trigram blocking"] {
        assert_eq!(table_row(&out, arm).len(), 3, "{out}");
    }
}

#[test]
fn preprocess_story_directory_and_raw_lines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stories = d.join("stories");
    fs::create_dir(&stories).unwrap();
    fs::write(
        stories.join("b.story"),
        "Dr. Smith arrived late. The meeting ran long!\n\nEveryone left at noon.\n\n@highlight\n\nSmith was late",
    )
    .unwrap();
    fs::write(stories.join("a.story"), "Rain fell. Rivers rose.\n\n@highlight\n\nRivers rose").unwrap();
    let out = d.join("records.jsonl");
    let vocab = d.join("vocab.txt");
    assert_ok(&run(&["preprocess", "--in", p(&stories), "--out", p(&out), "--vocab-out", p(&vocab)]));
    let docs = read_documents(&out).unwrap();
    assert_eq!(docs.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    assert_eq!(docs[1].len(), 3);
    assert_eq!(docs[1].sentences[0][0], "dr");
    assert_eq!(fs::read_to_string(&vocab).unwrap().lines().next(), Some("[PAD]"));

    let raw = d.join("raw.jsonl");
    fs::write(&raw, "{\"id\": \"x\", \"text\": \"One thing. Another thing.\", \"summary\": \"A thing.\"}\n").unwrap();
    let out2 = d.join("records2.jsonl");
    assert_ok(&run(&["preprocess", "--in", p(&raw), "--out", p(&out2)]));
    let docs = read_documents(&out2).unwrap();
    assert_eq!(docs[0].len(), 2);
    assert_eq!(docs[0].gold_summary.len(), 1);
}
