//! `streamvr`: batch runs, latency sweeps, verifier datasets and corpus
//! conversion.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime error,
//! 3 answers failed under `--strict`.

mod backend;
mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "streamvr", version, about = "Streaming sentence-level verification and refinement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate, verify and refine every answer of a corpus.
    Run(RunArgs),
    /// Evaluate the latency model over a parameter sweep.
    Simulate(SimulateArgs),
    /// Build a verifier training corpus from reference answers.
    Datagen(DatagenArgs),
    /// Convert a benchmark release into the corpus format.
    Convert(ConvertArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    None,
    Full,
    Streaming,
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
enum PromptModeArg {
    ClosedBook,
    OpenBook,
    FewShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
enum VerdictSourceArg {
    /// One verifier call on the whole answer.
    Independent,
    /// The answer is false if any sentence is.
    Sentences,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Corpus in JSONL form.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Pipelines to run; repeatable.
    #[arg(long = "mode", value_enum)]
    modes: Vec<ModeArg>,
    #[arg(long, value_enum)]
    prompt_mode: Option<PromptModeArg>,
    /// Passages in open-book prompts.
    #[arg(long)]
    passages: Option<usize>,
    /// Examples in few-shot prompts.
    #[arg(long)]
    shots: Option<usize>,
    /// Generator backend: an endpoint URL or script:PATH.
    #[arg(long)]
    backend_gen: Option<String>,
    /// Verifier backend: an endpoint URL or script:PATH.
    #[arg(long)]
    backend_ver: Option<String>,
    /// Refiner backend: an endpoint URL or script:PATH.
    #[arg(long)]
    backend_ref: Option<String>,
    /// Model name sent to HTTP backends.
    #[arg(long)]
    model: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Exit with code 3 if any answer failed.
    #[arg(long)]
    strict: bool,
    /// Regenerate the continuation after each streaming refinement.
    #[arg(long)]
    feedback: bool,
    /// Verdict source of a standalone full run.
    #[arg(long, value_enum)]
    full_verdict: Option<VerdictSourceArg>,
    /// Directory of prompt template overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// TOML file with defaults for any of the options above.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// TOML sweep description.
    #[arg(long, conflicts_with = "point")]
    config: Option<PathBuf>,
    /// A single point: t_ver,t_ref,n,T_S,T_F.
    #[arg(long, value_delimiter = ',')]
    point: Option<Vec<f64>>,
    /// Overrides the sweep seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// CSV destination; without it the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DatagenArgs {
    /// JSONL of {question, answer} records.
    #[arg(long)]
    source: PathBuf,
    /// Rewriting backend: an endpoint URL or script:PATH.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
    /// Falsification temperatures.
    #[arg(long, value_delimiter = ',')]
    temperatures: Option<Vec<f64>>,
    /// Paraphrases per stage; balances labels by default.
    #[arg(long)]
    paraphrases: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConvertFormat {
    Asqa,
    Quotesum,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    #[arg(long, value_enum)]
    format: ConvertFormat,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// ASQA split for the original release layout.
    #[arg(long)]
    split: Option<String>,
    /// Attach this many few-shot examples drawn from the converted records.
    #[arg(long)]
    shots: Option<usize>,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
    Strict(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Strict(_) => 3,
        }
    }
}

pub fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

pub fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
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
    let result = match cli.command {
        Command::Run(args) => commands::run(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Datagen(args) => commands::datagen(args),
        Command::Convert(args) => commands::convert(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Usage(e) | Failure::Runtime(e) => eprintln!("error: {e:#}"),
                Failure::Strict(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(failure.code())
        }
    }
}
