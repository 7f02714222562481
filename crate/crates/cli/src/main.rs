//! `colorpa`: logical error rate campaigns, threshold fits, resource studies and oracle checks.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::Probability;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    Usage(String),
    /// Anything that went wrong while running; exit code 1.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "colorpa", version, about = "Population-annealing decoding of 4.8.8 color codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Logical error rates over a grid of distances and error rates.
    Simulate(SimulateArgs),
    /// Threshold fit of simulate output.
    Fit(FitArgs),
    /// Free-energy variance, |βΔF| histograms and Δp_L for reduced PA budgets.
    ResourceStudy(ResourceArgs),
    /// Agreement between the PA decoder and exact enumeration.
    OracleCheck(OracleArgs),
    /// Lattice geometry and validation report as JSON.
    ExportLattice(ExportArgs),
}

#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// `key = value` file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output file; defaults to a file in $COLORPA_OUT_DIR or the working directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct PaArgs {
    /// Replicas R.
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Temperature steps N_T.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Sweeps per step N_S.
    #[arg(long)]
    pub sweeps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub pa: PaArgs,
    /// bitflip, depolarizing or phenomenological.
    #[arg(long)]
    pub model: Option<String>,
    /// Code distances, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub d: Vec<usize>,
    /// Physical error rates, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<Probability>,
    #[arg(long)]
    pub instances: Option<usize>,
    /// pa, exact or sa.
    #[arg(long)]
    pub decoder: Option<String>,
    /// Noisy rounds for the phenomenological model (default d).
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Decode at this rate instead of the sampling rate.
    #[arg(long)]
    pub decode_p: Option<Probability>,
    /// csv or json; defaults to the output file's extension.
    #[arg(long)]
    pub format: Option<String>,
    /// Also write one JSON line per decoded instance here.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// CSV or JSON written by `simulate`.
    #[arg(long)]
    pub input: PathBuf,
    /// linear or quadratic.
    #[arg(long)]
    pub order: Option<String>,
    #[arg(long)]
    pub d_min: Option<usize>,
    /// Radius around the first-pass threshold, or `none` to keep every point.
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ResourceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub p: Option<Probability>,
    /// Temperature steps shared by the budgets.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Budgets as RxN_S, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Vec<String>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub variance_instances: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Decoder standing in for the optimal one: exact or pa.
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long)]
    pub ref_replicas: Option<usize>,
    #[arg(long)]
    pub ref_steps: Option<usize>,
    #[arg(long)]
    pub ref_sweeps: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Use zero free-energy variance in the estimate.
    #[arg(long)]
    pub zero_variance: bool,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub pa: PaArgs,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub p: Option<Probability>,
    #[arg(long)]
    pub instances: Option<usize>,
    /// Minimum agreement rate for exit code 0.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Fit(args) => commands::fit(args),
        Command::ResourceStudy(args) => commands::resource_study(args),
        Command::OracleCheck(args) => commands::oracle_check(args),
        Command::ExportLattice(args) => commands::export_lattice(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}
