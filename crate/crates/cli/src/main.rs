//! `uvit`: presets, cost tables, window-strategy tools, deterministic
//! forward runs and receptive-field summaries, all written to files.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] uvit_core::Error),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("serialization failed: {0}")]
    Serialize(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "uvit", version, about = "Single-scale ViT backbone tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List built-in configurations with their parameter and MAC counts.
    Presets(OutArgs),
    /// Parameter and MAC counts of one configuration.
    Cost(CostArgs),
    /// Cost of every SD/MF/2x ablation-family member next to published totals.
    AblationTable(OutArgs),
    /// Cost of the compound-scaling grid next to published totals.
    ScalingTable(OutArgs),
    /// Window-strategy tools.
    Window {
        #[command(subcommand)]
        action: WindowAction,
    },
    /// Deterministic forward pass; emits output shapes, sums and SHA-256 checksums.
    Forward(ForwardArgs),
    /// Relative receptive-field summary of attention scores.
    Rf(RfArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct OutArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct ConfigSource {
    /// Built-in preset name, e.g. uvit-b-cls.
    #[arg(long)]
    pub preset: Option<String>,
    /// JSON architecture config.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CostArgs {
    #[command(flatten)]
    pub source: ConfigSource,
    /// Square input side; defaults to the config's input.
    #[arg(long)]
    pub input: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

/// `HxW` token-grid extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    pub h: usize,
    pub w: usize,
}

fn parse_grid(text: &str) -> Result<Grid, String> {
    let (h, w) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got '{text}'"))?;
    let num = |s: &str| s.trim().parse::<usize>().map_err(|e| format!("'{s}': {e}"));
    Ok(Grid {
        h: num(h)?,
        w: num(w)?,
    })
}

#[derive(Args, Debug)]
pub struct WindowArgs {
    /// Strategy such as "[4^-1]x14 -> [2^-1]x2 -> [1]x2".
    #[arg(long)]
    pub strategy: String,
    /// Required block count.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Token grid to bind the strategy to.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<Grid>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum WindowAction {
    /// Check a strategy and report its phases (and layouts with --grid).
    Validate(WindowArgs),
    /// Print the canonical spelling of a strategy.
    Canonicalize(WindowArgs),
}

#[derive(Args, Debug)]
pub struct ForwardArgs {
    #[command(flatten)]
    pub source: ConfigSource,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Square input side; defaults to the config's input.
    #[arg(long)]
    pub input: Option<usize>,
    /// Weight container to use instead of seeded initialization.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Also write every block's attention scores as CSV.
    #[arg(long)]
    pub scores_out: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RfArgs {
    /// Score CSV (`layer,window,head,row,col,score`), e.g. from `forward --scores-out`.
    #[arg(long)]
    pub scores: PathBuf,
    /// With csv format, emit `layer,head,r` instead of `layer,mean,std`.
    #[arg(long)]
    pub long: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Presets(out) => commands::presets(&out),
        Command::Cost(args) => commands::cost(&args),
        Command::AblationTable(out) => commands::ablation_table(&out),
        Command::ScalingTable(out) => commands::scaling_table(&out),
        Command::Window { action } => match action {
            WindowAction::Validate(args) => commands::window_validate(&args),
            WindowAction::Canonicalize(args) => commands::window_canonicalize(&args),
        },
        Command::Forward(args) => commands::forward(&args),
        Command::Rf(args) => commands::rf(&args),
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
