use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gas_oracle_core::Error;
use tracing_subscriber::EnvFilter;

mod commands;

/// Gas price oracles for Ethereum: fetch blocks, preprocess, backtest and quote.
#[derive(Parser, Debug)]
#[command(name = "gas-oracle", version, about)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory that relative output paths are written under.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,

    /// Worker threads for backtests (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More logging on stderr; repeat for debug output. `RUST_LOG` overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Table,
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OracleKind {
    Gp,
    GsExpress,
    Geth,
    Hybrid,
}

impl OracleKind {
    pub fn parse(s: &str) -> Option<OracleKind> {
        <OracleKind as ValueEnum>::from_str(s, true).ok()
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Collect raw per-transaction gas prices into a CSV file.
    Ingest(IngestArgs),
    /// Drop small blocks and low-fee outliers, keeping each block's minimum price.
    Preprocess(PreprocessArgs),
    /// Score one oracle over a processed series.
    Backtest(BacktestArgs),
    /// Score several oracles over the same targets.
    Compare(CompareArgs),
    /// Quote the next block's price from a history file.
    Quote(QuoteArgs),
    /// Per-block actual and predicted prices from saved reports, for plotting.
    PlotData(PlotDataArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Read blocks from a CSV or JSON file instead of a node.
    #[arg(long, conflicts_with = "rpc")]
    input: Option<PathBuf>,
    /// JSON-RPC endpoint (overrides the config file and GAS_ORACLE_RPC_URL).
    #[arg(long)]
    rpc: Option<String>,
    #[arg(long, required_unless_present = "input")]
    start: Option<u64>,
    #[arg(long, required_unless_present = "input")]
    end: Option<u64>,
    /// Raw CSV to write. When fetching, an existing file is extended from its last block.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
pub struct HybridArgs {
    #[arg(long)]
    n_gs: Option<usize>,
    #[arg(long)]
    n_gp: Option<usize>,
    /// Error band around α, in rate units.
    #[arg(long)]
    e: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct SeriesArgs {
    /// Processed CSV, or raw blocks which are preprocessed on load.
    #[arg(long = "in", alias = "input")]
    input: PathBuf,
    /// Training window for gp, gs-express and geth.
    #[arg(long)]
    train_size: Option<usize>,
    /// Comma-separated percent levels.
    #[arg(long)]
    alphas: Option<String>,
    /// 1-based inclusive target positions, `A:B`; either side may be empty.
    #[arg(long)]
    range: Option<String>,
    /// Refit GP hyperparameters every this many targets.
    #[arg(long)]
    refit_every: Option<usize>,
    #[command(flatten)]
    hybrid: HybridArgs,
}

#[derive(Args, Debug)]
pub struct BacktestArgs {
    #[arg(long, value_enum)]
    oracle: OracleKind,
    #[command(flatten)]
    series: SeriesArgs,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Comma-separated oracle names; defaults to the config file or all four.
    #[arg(long)]
    oracles: Option<String>,
    #[command(flatten)]
    series: SeriesArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QuoteArgs {
    #[arg(long, value_enum, default_value = "hybrid")]
    oracle: OracleKind,
    #[arg(long, default_value_t = 75.0)]
    alpha: f64,
    /// Processed (or raw) history; the quote is for the block after its last.
    #[arg(long)]
    history: PathBuf,
    #[arg(long)]
    train_size: Option<usize>,
    #[command(flatten)]
    hybrid: HybridArgs,
}

#[derive(Args, Debug)]
pub struct PlotDataArgs {
    /// Backtest or comparison JSON files.
    #[arg(long = "report", required = true)]
    reports: Vec<PathBuf>,
    /// Keep only these levels.
    #[arg(long)]
    alphas: Option<String>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Global options after merging the config file.
pub struct Context {
    pub config: gas_oracle_core::config::RunConfig,
    pub out_dir: Option<PathBuf>,
    pub format: OutputFormat,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Precondition(_) => 2,
        Error::Invariant(_) => 4,
        _ => 3,
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn context(cli: &Cli) -> Result<Context, Error> {
    let config = match &cli.config {
        Some(p) => gas_oracle_core::config::RunConfig::load(p)?,
        None => Default::default(),
    };
    let format = match (cli.format, config.format.as_deref()) {
        (Some(f), _) => f,
        (None, Some(s)) => {
            OutputFormat::from_str(s, true).map_err(|_| Error::Config(format!("unknown format `{s}`")))?
        }
        (None, None) => OutputFormat::Table,
    };
    let threads = cli.threads.or(config.threads);
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(Context {
        out_dir: cli
            .out_dir
            .clone()
            .or_else(|| config.out_dir.as_ref().map(PathBuf::from)),
        config,
        format,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let result = context(&cli).and_then(|ctx| match &cli.command {
        Command::Ingest(a) => commands::ingest(&ctx, a),
        Command::Preprocess(a) => commands::preprocess(&ctx, a),
        Command::Backtest(a) => commands::backtest(&ctx, a),
        Command::Compare(a) => commands::compare(&ctx, a),
        Command::Quote(a) => commands::quote(&ctx, a),
        Command::PlotData(a) => commands::plot_data(&ctx, a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Invariant("x".into())), 4);
        assert_eq!(
            exit_code(&Error::InsufficientHistory {
                needed: 2,
                available: 1
            }),
            3
        );
        assert_eq!(
            exit_code(&Error::Schema {
                path: "a.csv".into(),
                message: "bad".into()
            }),
            3
        );
    }

    #[test]
    fn oracle_names() {
        assert_eq!(OracleKind::parse("gs-express"), Some(OracleKind::GsExpress));
        assert_eq!(OracleKind::parse("HYBRID"), Some(OracleKind::Hybrid));
        assert_eq!(OracleKind::parse("median"), None);
    }
}
