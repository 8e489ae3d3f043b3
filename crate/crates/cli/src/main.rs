//! `bertsum`: command-line front end for the summarization pipeline.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use bertsum::oracle::Objective;
use bertsum::rouge::Protocol;
use clap::{Args, Parser, Subcommand, ValueEnum};

fn parse_with<T>(s: &str) -> Result<T, String>
where
    T: std::str::FromStr<Err = bertsum::Error>,
{
    s.parse().map_err(|e: bertsum::Error| e.to_string())
}

#[derive(Parser)]
#[command(name = "bertsum", version, about = "Extractive summarization pipeline")]
struct Cli {
    /// Worker threads for inference.
    #[arg(long, global = true, env = "BERTSUM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split and tokenize raw text into the record format; optionally build a vocabulary.
    Preprocess(PreprocessArgs),
    /// Label sentences with the greedy ROUGE oracle.
    Oracle(OracleArgs),
    /// Train a model from a run config.
    Train(TrainArgs),
    /// Score checkpoints on a test set next to the Lead and Oracle rows.
    Eval(EvalArgs),
    /// Extract summaries with a trained checkpoint.
    Summarize(SummarizeArgs),
    /// Compare predicted and gold summaries.
    Rouge(RougeArgs),
    /// Train and score the ablation arms of a run config.
    Ablate(AblateArgs),
    /// Write a synthetic corpus with planted extractive structure.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Directory of story files, or a JSON-lines file of {id, text, summary}.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write a vocabulary built from the output.
    #[arg(long)]
    vocab_out: Option<PathBuf>,
    #[arg(long, default_value_t = 30_000)]
    max_vocab: usize,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    max_sentences: u64,
    /// r1r2-mean, r1, r2 or r1r2rl-mean.
    #[arg(long, default_value = "r1r2-mean", value_parser = parse_with::<Objective>)]
    objective: Objective,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `paths.train`.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Overrides `paths.val`.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Overrides `paths.out_dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn enabled(self) -> bool {
        matches!(self, Switch::On)
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint file; repeat to average several.
    #[arg(long, required_unless_present = "run_dir")]
    checkpoint: Vec<PathBuf>,
    /// Training output directory; evaluates every retained checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    test: PathBuf,
    /// f1 or limited_recall.
    #[arg(long, default_value = "f1", value_parser = parse_with::<Protocol>)]
    protocol: Protocol,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long, value_enum, default_value = "on")]
    blocking: Switch,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long, value_enum, default_value = "on")]
    blocking: Switch,
}

#[derive(Args)]
struct RougeArgs {
    /// Records whose `pred` field (or `tgt` when absent) is scored.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// f1 or limited_recall.
    #[arg(long, default_value = "f1", value_parser = parse_with::<Protocol>)]
    protocol: Protocol,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    documents: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Chance of planting a near-duplicate salient sentence per document.
    #[arg(long, default_value_t = 0.0)]
    redundancy: f64,
    /// Attach greedy-oracle labels.
    #[arg(long)]
    labeled: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or_default();
            eprintln!("error[usage]: {}", first.trim_start_matches("error: ").trim());
            return ExitCode::from(2);
        }
    };
    let threads = cli
        .threads
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let result = match cli.command {
        Command::Preprocess(a) => commands::preprocess(&a.input, &a.out, a.vocab_out.as_deref(), a.max_vocab),
        Command::Oracle(a) => commands::oracle(&a.input, &a.out, a.max_sentences as usize, a.objective),
        Command::Train(a) => commands::train(&a.config, a.train, a.val, a.out_dir),
        Command::Eval(a) => commands::eval(commands::EvalRequest {
            checkpoints: a.checkpoint,
            run_dir: a.run_dir,
            test: a.test,
            protocol: a.protocol,
            k: a.k as usize,
            blocking: a.blocking.enabled(),
            threads,
        }),
        Command::Summarize(a) => commands::summarize(
            &a.checkpoint,
            &a.input,
            &a.out,
            a.k as usize,
            a.blocking.enabled(),
            threads,
        ),
        Command::Rouge(a) => commands::rouge(&a.pred, &a.gold, a.protocol),
        Command::Ablate(a) => commands::ablate(&a.config),
        Command::Synth(a) => commands::synth(&a.out, a.documents, a.seed, a.redundancy, a.labeled),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.kind.label(), f.message);
            ExitCode::from(f.kind.code())
        }
    }
}
