//! `carbonledger`: batch front end for the emission inventory toolkit.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error.

mod commands;
mod files;
mod manifest;
mod report;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::files::Inputs;

#[derive(Debug, Parser)]
#[command(name = "carbonledger", version, about, long_about = None)]
#[command(
    after_help = "Every flag can also be set through a CARBONLEDGER_* environment variable \
(shown in each command's help); flags given on the command line win."
)]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Annual emissions per source and in total.
    Compute(ComputeArgs),
    /// Project full-year emission growth from the first months of a year.
    Project(ProjectArgs),
    /// Monte Carlo one-sigma band and per-input variance contributions.
    Uncertainty(UncertaintyArgs),
    /// Evaluate several factor scenarios side by side.
    Compare(CompareArgs),
    /// Growth, intensity and driver tables from earlier outputs.
    Report(ReportArgs),
    /// Recompute the digests listed in a run manifest.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Flow tables (annual and/or monthly); later files override earlier ones.
    #[arg(
        long,
        env = "CARBONLEDGER_FLOWS",
        value_delimiter = ',',
        required = true
    )]
    flows: Vec<PathBuf>,

    /// Additional monthly flow tables, merged after --flows.
    #[arg(long, env = "CARBONLEDGER_MONTHLY", value_delimiter = ',')]
    monthly: Vec<PathBuf>,

    /// Scenario configuration (TOML); built-in presets when omitted.
    #[arg(long, env = "CARBONLEDGER_CONFIG")]
    config: Option<PathBuf>,
}

impl DataArgs {
    fn inputs(&self) -> Inputs<'_> {
        Inputs {
            flows: &self.flows,
            monthly: &self.monthly,
            ..Inputs::default()
        }
    }
}

#[derive(Debug, Args)]
struct ComputeArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Scenario name; the config's default when omitted.
    #[arg(long, env = "CARBONLEDGER_SCENARIO")]
    scenario: Option<String>,

    /// First year (default: earliest annual year).
    #[arg(long, env = "CARBONLEDGER_FROM")]
    from: Option<i32>,

    /// Last year (default: latest annual year).
    #[arg(long, env = "CARBONLEDGER_TO")]
    to: Option<i32>,

    /// Also compute a one-sigma band per year with this many draws.
    #[arg(long, env = "CARBONLEDGER_DRAWS")]
    draws: Option<usize>,

    /// Random seed for --draws (default: from config).
    #[arg(long, env = "CARBONLEDGER_SEED")]
    seed: Option<u64>,

    /// Output CSV.
    #[arg(long, env = "CARBONLEDGER_OUT")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    #[command(flatten)]
    data: DataArgs,

    #[arg(long, env = "CARBONLEDGER_SCENARIO")]
    scenario: Option<String>,

    /// Target year (default: latest year with monthly data).
    #[arg(long, env = "CARBONLEDGER_YEAR")]
    year: Option<i32>,

    /// Partial-year basis in months; several bases may be listed (10,9).
    #[arg(
        long,
        env = "CARBONLEDGER_MONTHS",
        value_delimiter = ',',
        default_value = "10",
        value_parser = clap::value_parser!(u8).range(1..=11)
    )]
    months: Vec<u8>,

    #[arg(long, env = "CARBONLEDGER_SEED")]
    seed: Option<u64>,

    /// Monte Carlo draws for the intervals (default: from config).
    #[arg(long, env = "CARBONLEDGER_DRAWS")]
    draws: Option<usize>,

    /// Fit one regression per flow across all fuels.
    #[arg(long, env = "CARBONLEDGER_POOLED")]
    pooled: bool,

    /// Interval coverage.
    #[arg(long, env = "CARBONLEDGER_LEVEL", default_value_t = carbonledger::nowcast::DEFAULT_LEVEL)]
    level: f64,

    /// First year of the regression panel.
    #[arg(long, env = "CARBONLEDGER_HISTORY_FROM")]
    history_from: Option<i32>,

    /// First year of the stock-change history.
    #[arg(long, env = "CARBONLEDGER_STOCK_FROM")]
    stock_from: Option<i32>,

    #[arg(long, env = "CARBONLEDGER_FORMAT", value_enum, default_value = "csv")]
    format: Format,

    #[arg(long, env = "CARBONLEDGER_OUT")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct UncertaintyArgs {
    #[command(flatten)]
    data: DataArgs,

    #[arg(long, env = "CARBONLEDGER_SCENARIO")]
    scenario: Option<String>,

    /// Year to evaluate (default: latest annual year).
    #[arg(long, env = "CARBONLEDGER_YEAR")]
    year: Option<i32>,

    #[arg(long, env = "CARBONLEDGER_DRAWS")]
    draws: Option<usize>,

    #[arg(long, env = "CARBONLEDGER_SEED")]
    seed: Option<u64>,

    /// Band CSV.
    #[arg(long, env = "CARBONLEDGER_OUT")]
    out: PathBuf,

    /// Contributions CSV (default: <out stem>.contributions.csv).
    #[arg(long, env = "CARBONLEDGER_CONTRIBUTIONS")]
    contributions: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,

    /// At least two scenario names.
    #[arg(
        long,
        env = "CARBONLEDGER_SCENARIOS",
        value_delimiter = ',',
        required = true
    )]
    scenarios: Vec<String>,

    /// Scenario deviations are measured against (default: the first).
    #[arg(long, env = "CARBONLEDGER_REFERENCE")]
    reference: Option<String>,

    #[arg(long, env = "CARBONLEDGER_FROM")]
    from: Option<i32>,

    #[arg(long, env = "CARBONLEDGER_TO")]
    to: Option<i32>,

    #[arg(long, env = "CARBONLEDGER_OUT")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportTable {
    Growth,
    Intensity,
    Drivers,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Emissions CSV(s) written by `compute`.
    #[arg(long = "in", env = "CARBONLEDGER_IN", value_delimiter = ',')]
    input: Vec<PathBuf>,

    #[arg(long, env = "CARBONLEDGER_TABLE", value_enum, default_value = "growth")]
    table: ReportTable,

    /// GDP table (year,gdp_index,secondary_share) for the intensity table.
    #[arg(long, env = "CARBONLEDGER_GDP")]
    gdp: Option<PathBuf>,

    /// Industrial products table (year,month,product,output) for drivers.
    #[arg(long, env = "CARBONLEDGER_PRODUCTS")]
    products: Option<PathBuf>,

    /// Driver year (default: latest in the products table).
    #[arg(long, env = "CARBONLEDGER_YEAR")]
    year: Option<i32>,

    /// Driver basis in months (default: latest month of the driver year).
    #[arg(long, env = "CARBONLEDGER_MONTHS", value_parser = clap::value_parser!(u8).range(1..=12))]
    months: Option<u8>,

    #[arg(long, env = "CARBONLEDGER_FORMAT", value_enum, default_value = "text")]
    format: Format,

    /// Output file (stdout when omitted).
    #[arg(long, env = "CARBONLEDGER_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// A `*.manifest.toml` sidecar.
    manifest: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CARBONLEDGER_LOG", level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Compute(a) => commands::compute(a),
        Command::Project(a) => commands::project(a),
        Command::Uncertainty(a) => commands::uncertainty(a),
        Command::Compare(a) => commands::compare(a),
        Command::Report(a) => report::run(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            commands::print_error(&e);
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
