mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ctc_headline::error::Error;

/// CTC headline generation: prepare corpora, train, summarize, evaluate.
#[derive(Debug, Parser)]
#[command(name = "ctc-headline", version)]
struct Cli {
    /// Worker threads for batch gradients and window decoding.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build vocabularies and an encoded corpus from JSONL or the synthetic generator.
    Prepare(PrepareArgs),
    /// Train a BiLSTM on a prepared corpus.
    Train(TrainArgs),
    /// Generate headlines with a trained checkpoint.
    Summarize(SummarizeArgs),
    /// Score predictions against references.
    Evaluate(EvaluateArgs),
    /// Run the built-in oracle suites.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Args)]
struct PrepareArgs {
    /// JSONL corpus with `document` and `headline` fields.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    corpus: Option<PathBuf>,
    /// Generate a synthetic corpus instead: `salient` or `bigram`.
    #[arg(long)]
    synthetic: Option<String>,
    /// Synthetic training pairs.
    #[arg(long, default_value_t = 10_000, requires = "synthetic")]
    pairs: usize,
    /// Synthetic held-out pairs, encoded with the training vocabularies.
    #[arg(long, default_value_t = 0, requires = "synthetic")]
    held_out: usize,
    /// Seed for the synthetic generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra JSONL corpus encoded with the training vocabularies as the held-out set.
    #[arg(long, conflicts_with = "synthetic")]
    eval_corpus: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "CTC_HEADLINE_DATA", default_value = "data")]
    out: PathBuf,
    /// Document tokenization: `character` or `word`.
    #[arg(long, default_value = "character")]
    mode: String,
    /// Repeat every input token k times.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Input tokens seen fewer times map to <unk>.
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    /// Keep the first N document tokens [default: 55 in character mode].
    #[arg(long, conflicts_with = "no_truncate")]
    truncate: Option<usize>,
    /// Keep whole documents.
    #[arg(long)]
    no_truncate: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory written by `prepare`.
    #[arg(long, env = "CTC_HEADLINE_DATA", default_value = "data")]
    data: PathBuf,
    /// Directory for checkpoints and the epoch log.
    #[arg(long, env = "CTC_HEADLINE_RUNS", default_value = "run")]
    out: PathBuf,
    /// JSON file with training settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// `adam` or `sgd`.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    d_emb: Option<usize>,
    #[arg(long)]
    d_hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    #[arg(long, env = "CTC_HEADLINE_CHECKPOINT")]
    checkpoint: PathBuf,
    /// JSONL with `document` (and optional `id`), or plain text with one
    /// document per line. `-` reads stdin.
    #[arg(long)]
    input: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_parser = ["jsonl", "text"])]
    format: Option<String>,
    /// Output JSONL; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Must match the checkpoint when given.
    #[arg(long)]
    mode: Option<String>,
    /// Must match the checkpoint when given.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 55)]
    window_len: usize,
    #[arg(long, default_value_t = 5)]
    stride: usize,
    #[arg(long, default_value_t = 20)]
    max_windows: usize,
    #[arg(long, default_value_t = 150)]
    scan_len: usize,
    /// Best-path decoding (default).
    #[arg(long, conflicts_with = "beam")]
    greedy: bool,
    /// Prefix beam search with this width. Width 1 keeps one prefix and can
    /// differ from greedy, which scores paths rather than prefixes.
    #[arg(long)]
    beam: Option<usize>,
    /// Include every window candidate and the winning window's saliency.
    #[arg(long)]
    diagnostics: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// JSONL with `id` and `headline`.
    #[arg(long)]
    predictions: PathBuf,
    /// JSONL with `id`, `document` and `headline`.
    #[arg(long)]
    references: PathBuf,
    #[arg(long, default_value_t = ctc_headline::evaluation::DEFAULT_LCS_THRESHOLD)]
    lcs_threshold: f64,
    /// Also write the report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelfcheckArgs {
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Swap in a CTC recursion with a wrong transition rule.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

/// Failure classes, one per exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidArgument(_) => Failure::Usage(msg),
            Error::Divergence { .. } | Error::Emission(_) | Error::Shape { .. } => Failure::Numerical(msg),
            _ => Failure::Data(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = cli.threads;
    let result = ctc_headline::par::with_threads(threads, move || match cli.command {
        Command::Prepare(a) => commands::prepare(a),
        Command::Train(a) => commands::train(a),
        Command::Summarize(a) => commands::summarize(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Selfcheck(a) => commands::selfcheck(a),
    })
    .unwrap_or_else(|e| Err(e.into()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
