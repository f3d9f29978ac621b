//! Pipeline orchestrator: composable subcommands over a single config.
//!
//! Exit codes: 0 success, 2 input/config error, 3 load failure, 4 analytic
//! precondition (e.g. no placebo arms to pool).

mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use config::{parse_dialects, PipelineConfig};
use stages::OutputLock;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn load(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }

    pub fn analytic(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            message: message.into(),
        }
    }

    pub fn other(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ctgdb", version, about = "Clinical-trial registry ETL and screening pipeline")]
struct Cli {
    /// Config file: one key=value per line, # comments.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Input directory of registry XML files.
    #[arg(long = "in", global = true, value_name = "DIR")]
    input: Option<PathBuf>,

    /// Output directory for all pipeline artifacts.
    #[arg(long = "out", global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Vocabulary TSV (code, text, level, parent_pt_code, soc_code, umls_cui).
    #[arg(long = "vocab", global = true, value_name = "FILE")]
    vocab: Option<PathBuf>,

    /// SQL dialect(s) to emit: mysql, postgres or both.
    #[arg(long, global = true, value_name = "WHICH")]
    dialect: Option<String>,

    /// Minimum Dice score accepted at the fuzzy stage, in (0, 1].
    #[arg(long, global = true, value_name = "T")]
    fuzzy_threshold: Option<f64>,

    /// Disable the fuzzy matching stage.
    #[arg(long, global = true)]
    no_fuzzy: bool,

    /// Event group TSV (group_name, pt_code); repeatable.
    #[arg(long, global = true, value_name = "FILE")]
    event_group: Vec<PathBuf>,

    /// Include all study phases in product-level aggregates.
    #[arg(long, global = true)]
    no_phase_restrict: bool,

    /// Count only serious adverse-event rows.
    #[arg(long, global = true)]
    serious_only: bool,

    /// Database connection, e.g. sqlite:build/ctgdb.sqlite
    /// (falls back to CTGDB_DB_URI).
    #[arg(long, global = true, value_name = "URI")]
    db_uri: Option<String>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse the XML corpus, apply inclusion filters, write the record store.
    Ingest,
    /// Align adverse-event and condition strings to the vocabulary.
    Normalize,
    /// Write relational table CSVs and DDL scripts.
    Emit,
    /// Apply DDL and bulk-load the emitted CSVs into a database.
    Load,
    /// Compute placebo-referenced screening statistics per event group.
    Screen,
    /// Run ingest, normalize, emit, optional load, then screen.
    All,
}

fn resolve_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &cli.input {
        cfg.input_dir = Some(v.clone());
    }
    if let Some(v) = &cli.out {
        cfg.output_dir = Some(v.clone());
    }
    if let Some(v) = &cli.vocab {
        cfg.vocabulary = Some(v.clone());
    }
    if let Some(v) = &cli.dialect {
        cfg.dialects = parse_dialects(v)?;
    }
    if let Some(v) = cli.fuzzy_threshold {
        cfg.normalizer.fuzzy_threshold = v;
    }
    if cli.no_fuzzy {
        cfg.normalizer.enable_fuzzy = false;
    }
    if !cli.event_group.is_empty() {
        cfg.event_groups.extend(cli.event_group.iter().cloned());
    }
    if cli.no_phase_restrict {
        cfg.phase_restrict = false;
    }
    if cli.serious_only {
        cfg.serious_only = true;
    }
    if let Some(v) = &cli.db_uri {
        cfg.db_uri = Some(v.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    let out = cfg.require_output_dir()?.to_path_buf();
    let _lock = OutputLock::acquire(&out)?;
    match cli.command {
        Command::Ingest => stages::run_ingest(&cfg, &out).map(|_| ()),
        Command::Normalize => stages::run_normalize(&cfg, &out).map(|_| ()),
        Command::Emit => stages::run_emit(&cfg, &out).map(|_| ()),
        Command::Load => stages::run_load(&cfg, &out).map(|_| ()),
        Command::Screen => stages::run_screen(&cfg, &out).map(|_| ()),
        Command::All => stages::run_all(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
