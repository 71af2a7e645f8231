//! `ptd`: persuasion-technique detection pipeline.
//!
//! Subcommands: `eda`, `train`, `predict`, `calibrate`, `submit`, `score`.
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
//! divergence, 5 vocabulary mismatch. Progress goes to stderr; the
//! machine-readable outputs (calibration summary, score report) go to
//! stdout.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CalibrateMode, Ctx};
use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Divergence(String),
    Vocabulary(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Vocabulary(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Divergence(m) => write!(f, "training diverged: {m}"),
            CliError::Vocabulary(m) => write!(f, "vocabulary mismatch: {m}"),
        }
    }
}

impl From<ptd_core::Error> for CliError {
    fn from(err: ptd_core::Error) -> Self {
        match err {
            ptd_core::Error::NonFiniteLoss { .. } => CliError::Divergence(err.to_string()),
            ptd_core::Error::VocabularyMismatch(_) => CliError::Vocabulary(err.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Splits a `lang=path` argument.
fn parse_tagged(value: &str) -> Result<(String, PathBuf), String> {
    match value.split_once('=') {
        Some((lang, path)) if !lang.is_empty() && !path.is_empty() => {
            Ok((lang.to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected lang=path, got {value:?}")),
    }
}

#[derive(Parser)]
#[command(name = "ptd", version, about = "Persuasion-technique detection pipeline")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the language x technique label-distribution CSV.
    Eda {
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the baseline classifier on all configured languages.
    Train {
        /// Output model path.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated strategies (ws_punct, entities); overrides the config.
        #[arg(long)]
        preprocess: Option<String>,
    },
    /// Write per-class probabilities for a template file as JSON Lines.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        template: PathBuf,
        /// Language tag for every paragraph in the template.
        #[arg(long)]
        language: String,
        /// Optional vocabulary file to cross-check against the model.
        #[arg(long)]
        vocabulary: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep confidence thresholds and report the best one.
    Calibrate {
        /// Probability table(s); several tables form a label-union ensemble.
        #[arg(long = "table")]
        tables: Vec<PathBuf>,
        /// Gold label file (default mode).
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "default")]
        mode: CalibrateMode,
        /// Language held out for zero-shot simulation (repeatable).
        #[arg(long = "holdout")]
        holdout: Vec<String>,
        /// Output CSV for the calibration curve.
        #[arg(long)]
        out_curve: PathBuf,
        /// Optional output path for the summary JSON (also printed to stdout).
        #[arg(long)]
        out_summary: Option<PathBuf>,
    },
    /// Decode tables with the seen/unseen thresholds into submission files.
    Submit {
        /// lang=path pairs; repeat a language to union-merge two models.
        #[arg(long = "table", value_parser = parse_tagged)]
        tables: Vec<(String, PathBuf)>,
        /// Directory receiving one <lang>.tsv per language.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score a prediction file against a gold file.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        vocabulary: PathBuf,
        /// lang=path template pairs enabling per-language breakdowns.
        #[arg(long = "template", value_parser = parse_tagged)]
        templates: Vec<(String, PathBuf)>,
        /// Optional output path for the report JSON (also printed to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn require_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("this subcommand needs --config".into()))?;
    RunConfig::load(path)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let ctx = Ctx {
        quiet: cli.quiet,
        seed: cli.seed,
    };
    match &cli.command {
        Command::Eda { out } => commands::cmd_eda(&require_config(cli)?, &ctx, out),
        Command::Train { out, preprocess } => {
            commands::cmd_train(&require_config(cli)?, &ctx, preprocess.as_deref(), out)
        }
        Command::Predict {
            model,
            template,
            language,
            vocabulary,
            out,
        } => commands::cmd_predict(&ctx, model, template, language, vocabulary.as_deref(), out),
        Command::Calibrate {
            tables,
            gold,
            mode,
            holdout,
            out_curve,
            out_summary,
        } => commands::cmd_calibrate(
            &require_config(cli)?,
            &ctx,
            *mode,
            tables,
            gold.as_deref(),
            holdout,
            out_curve,
            out_summary.as_deref(),
        ),
        Command::Submit { tables, out_dir } => {
            commands::cmd_submit(&require_config(cli)?, &ctx, tables, out_dir)
        }
        Command::Score {
            pred,
            gold,
            vocabulary,
            templates,
            out,
        } => commands::cmd_score(&ctx, pred, gold, vocabulary, templates, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
