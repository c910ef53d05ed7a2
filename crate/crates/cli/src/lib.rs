//! `seqtag`: train, tag, evaluate, ablate, corpus statistics and self-check.
//!
//! Exit codes: 0 success, 1 bad input or usage, 2 non-finite training loss,
//! 3 self-check failure.

mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{FileConfig, TrainFlags};

pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NON_FINITE: i32 = 2;
pub const EXIT_SELFCHECK: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::input(message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Parser, Debug)]
#[command(name = "seqtag", version, about = "Bi-LSTM named-entity tagger")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Global {
    /// Seed for initialization, shuffling, dropout and dev splits
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML (or manifest JSON) file with default settings
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Only print results and errors
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write it with its log and manifest
    Train(TrainArgs),
    /// Append predicted labels to a CoNLL file
    Tag(TagArgs),
    /// Score a file with gold and predicted label columns
    Eval(EvalArgs),
    /// Train one model per configuration row and tabulate dev scores
    Ablate(AblateArgs),
    /// Entity, sentence and token counts
    Stats(StatsArgs),
    /// Gradient check and scorer-oracle comparison
    Selfcheck(SelfcheckArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Model file to write; the log and manifest go next to it [default: model.sqtg]
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TagArgs {
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// CoNLL input: word POS chunk [label]
    #[arg(long, value_name = "CONLL")]
    pub input: Option<PathBuf>,
    /// Output file [default: standard output]
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Word vectors, for models trained on pretrained embeddings [default: path recorded in the model]
    #[arg(long, value_name = "VEC")]
    pub embeddings: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Gold label in the second-to-last column, prediction in the last
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Only score these entity types, e.g. PER,LOC,ORG
    #[arg(long)]
    pub types: Option<String>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Built-in row set: table3 | table4 | table5 | table6 | table7
    #[arg(long, conflicts_with = "rows")]
    pub preset: Option<String>,
    /// TOML file with [[row]] tables overriding the base settings
    #[arg(long, value_name = "PATH")]
    pub rows: Option<PathBuf>,
    /// Directory for the tables, manifest and kept models [default: ablation]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Save every row's model
    #[arg(long)]
    pub keep_models: bool,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// CoNLL files
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Label scheme: iob1 | iob2
    #[arg(long, default_value = "iob2")]
    pub scheme: String,
    /// Repair malformed label sequences instead of rejecting them
    #[arg(long)]
    pub lenient: bool,
    /// key=value output
    #[arg(long)]
    pub kv: bool,
}

#[derive(Args, Debug)]
pub struct SelfcheckArgs {
    /// Number of gradient-check seeds
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    /// Random sentence pairs for the scorer comparison
    #[arg(long, default_value_t = 1000)]
    pub cases: usize,
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
}

/// Parse `args` and run. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e);
            e.code
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.global.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let quiet = cli.global.quiet || file.quiet.unwrap_or(false);
    let ctx = commands::Context {
        seed: cli.global.seed,
        quiet,
        file,
    };
    match cli.command {
        Command::Train(a) => commands::train(&ctx, a),
        Command::Tag(a) => commands::tag(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Ablate(a) => commands::ablate(&ctx, a),
        Command::Stats(a) => commands::stats(&ctx, a),
        Command::Selfcheck(a) => commands::selfcheck(&ctx, a),
    }
}
