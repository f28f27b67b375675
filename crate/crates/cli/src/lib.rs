//! The `bgforecast` command line: one subcommand per workflow step, all
//! operating on a workspace rooted at the current directory.

mod commands;
mod error;
mod workspace;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use bgforecast::parsers::SourceKind;
use bgforecast::{GlucoseUnit, Signal};
use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, CliResult};
pub use workspace::{Settings, WorkspaceLayout, SUBDIRECTORIES};

#[derive(Debug, Parser)]
#[command(name = "bgforecast", version, about = "Blood-glucose prediction workflow")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create the data/ workspace layout in the current directory.
    #[command(name = "setup_directories")]
    SetupDirectories,
    /// Fetch or read a data source and store it as a raw CSV in data/raw.
    #[command(name = "parse")]
    Parse(ParseArgs),
    /// Write a pipeline configuration for a raw dataset.
    #[command(name = "generate_config")]
    GenerateConfig(GenerateConfigArgs),
    /// Train the configured models and store them in data/trained_models.
    #[command(name = "train_model")]
    TrainModel(TrainArgs),
    /// Evaluate trained models on the test split and write metric tables.
    #[command(name = "calculate_metrics")]
    CalculateMetrics(ModelsArgs),
    /// Draw scatter, trajectory or single-prediction plots.
    #[command(name = "draw_plots")]
    DrawPlots(PlotArgs),
    /// Set the glucose unit used in reports and plots.
    #[command(name = "set_unit")]
    SetUnit(SetUnitArgs),
}

fn parse_source(s: &str) -> Result<SourceKind, String> {
    s.parse().map_err(|e: bgforecast::Error| e.to_string())
}

fn parse_signal(s: &str) -> Result<Signal, String> {
    s.parse().map_err(|e: bgforecast::Error| e.to_string())
}

fn parse_unit(s: &str) -> Result<GlucoseUnit, String> {
    s.parse().map_err(|e: bgforecast::Error| e.to_string())
}

fn parse_time(s: &str) -> Result<DateTime<Utc>, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
        .map_err(|_| format!("`{s}` is neither an RFC 3339 timestamp nor a YYYY-MM-DD date"))
}

fn parse_hyperparameter(s: &str) -> Result<(String, String, serde_json::Value), String> {
    let err = || format!("`{s}` should look like MODEL.KEY=VALUE");
    let (lhs, value) = s.split_once('=').ok_or_else(err)?;
    let (model, key) = lhs.split_once('.').ok_or_else(err)?;
    let value = serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
    Ok((model.trim().to_ascii_lowercase(), key.trim().to_string(), value))
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// nightscout, apple_health, ohio_t1dm, csv or synthetic.
    #[arg(long, value_parser = parse_source)]
    pub source: SourceKind,
    /// URL (Nightscout) or input file; not used for synthetic data.
    #[arg(long)]
    pub location: Option<String>,
    /// Nightscout API secret or access token.
    #[arg(long)]
    pub token: Option<String>,
    /// Start of the time range (RFC 3339 or YYYY-MM-DD).
    #[arg(long, value_parser = parse_time)]
    pub start: Option<DateTime<Utc>>,
    /// End of the time range (RFC 3339 or YYYY-MM-DD).
    #[arg(long, value_parser = parse_time)]
    pub end: Option<DateTime<Utc>>,
    /// File name under data/raw; defaults to the source kind.
    #[arg(long)]
    pub output_name: Option<String>,
    /// Synthetic generator seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Synthetic dataset length in days.
    #[arg(long, default_value_t = 14)]
    pub days: u32,
}

#[derive(Debug, Args)]
pub struct GenerateConfigArgs {
    /// Raw dataset name in data/raw.
    #[arg(long)]
    pub data: String,
    /// Configuration name in data/configurations.
    #[arg(long, default_value = "config")]
    pub output_name: String,
    /// Prediction horizon in minutes.
    #[arg(long, default_value_t = 120)]
    pub horizon: u32,
    /// Number of lagged samples per feature signal.
    #[arg(long, default_value_t = 12)]
    pub lookback: usize,
    /// Feature signals, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "CGM", value_parser = parse_signal)]
    pub features: Vec<Signal>,
    /// What-if signals whose future values are known, comma separated.
    #[arg(long = "what-if", value_delimiter = ',', value_parser = parse_signal)]
    pub what_if: Vec<Signal>,
    /// Fraction of samples held out for testing.
    #[arg(long, default_value_t = 0.25)]
    pub test_fraction: f64,
    /// Models to configure, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "ridge,locf_baseline")]
    pub models: Vec<String>,
    /// Hyperparameter override, MODEL.KEY=VALUE; repeatable.
    #[arg(long = "hyperparameter")]
    pub hyperparameters: Vec<String>,
    /// Longest gap in minutes filled by interpolation.
    #[arg(long, default_value_t = 30)]
    pub max_gap: u32,
    /// Feature scaling.
    #[arg(long, value_enum, default_value_t = ScalingArg::Standardize)]
    pub scaling: ScalingArg,
    #[arg(long)]
    pub subject_id: Option<String>,
    /// Seed for randomized learners.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScalingArg {
    None,
    Standardize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Configuration name in data/configurations.
    #[arg(long)]
    pub config: String,
    /// Train only this model.
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Args)]
pub struct ModelsArgs {
    /// Configuration name in data/configurations.
    #[arg(long)]
    pub config: String,
    /// Models to use; defaults to every configured model.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub models: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotType {
    Scatter,
    Trajectories,
    Single,
}

impl PlotType {
    pub fn name(self) -> &'static str {
        match self {
            PlotType::Scatter => "scatter",
            PlotType::Trajectories => "trajectories",
            PlotType::Single => "single",
        }
    }
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub models: ModelsArgs,
    /// Plot kinds to draw.
    #[arg(long, value_enum, num_args = 1.., value_delimiter = ',', default_value = "scatter")]
    pub plot_type: Vec<PlotType>,
    /// Prediction time for the single plot; defaults to the test sample with
    /// the most recent carbohydrates.
    #[arg(long, value_parser = parse_time)]
    pub origin: Option<DateTime<Utc>>,
}

#[derive(Debug, Args)]
pub struct SetUnitArgs {
    /// mg/dL or mmol/L.
    #[arg(long, value_parser = parse_unit)]
    pub unit: GlucoseUnit,
}

/// Runs one command in `root`.
pub fn execute(cli: Cli, root: &Path) -> CliResult<()> {
    match cli.command {
        Command::SetupDirectories => commands::setup_directories(root),
        Command::Parse(a) => commands::parse(&WorkspaceLayout::open(root)?, &a),
        Command::GenerateConfig(a) => commands::generate_config(&WorkspaceLayout::open(root)?, &a),
        Command::TrainModel(a) => commands::train_model(&WorkspaceLayout::open(root)?, &a),
        Command::CalculateMetrics(a) => commands::calculate_metrics(&WorkspaceLayout::open(root)?, &a),
        Command::DrawPlots(a) => commands::draw_plots(&WorkspaceLayout::open(root)?, &a),
        Command::SetUnit(a) => commands::set_unit(&WorkspaceLayout::open(root)?, &a),
    }
}

/// Parses `args` and runs the command in `root`; returns the process exit code.
pub fn run<I, T>(args: I, root: &Path) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli, root) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn current_dir() -> PathBuf {
    std::env::current_dir().unwrap_or_else(|_| PathBuf::from("."))
}
