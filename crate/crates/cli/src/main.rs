//! `imexglm` command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid input or a failed check, 2 when a
//! computation fails numerically.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imexglm::catalogue::CatalogueError;
use imexglm::extrap::ExtrapError;
use imexglm::glm::GlmError;
use imexglm::integrate::IntegrateError;
use imexglm::stability::StabilityError;

use config::{GridPreset, ProblemKind, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<GlmError> for CliError {
    fn from(e: GlmError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<CatalogueError> for CliError {
    fn from(e: CatalogueError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ExtrapError> for CliError {
    fn from(e: ExtrapError) -> Self {
        match e {
            ExtrapError::Matrix(_) | ExtrapError::Invariant(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<StabilityError> for CliError {
    fn from(e: StabilityError) -> Self {
        match e {
            StabilityError::Invalid(_) => CliError::Validation(e.to_string()),
            StabilityError::Extrap(inner) => inner.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<IntegrateError> for CliError {
    fn from(e: IntegrateError) -> Self {
        match e {
            IntegrateError::Invalid(_) | IntegrateError::StepMismatch { .. } => CliError::Validation(e.to_string()),
            IntegrateError::Extrap(inner) => inner.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "imexglm", version, about = "IMEX general linear methods: tableaux, stability regions, integration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print stage-order and order residuals of a tableau.
    Check(Flags),
    /// Export the scheme (or only its base tableau) as JSON.
    Tableau(Flags),
    /// Region area, raster and boundary files.
    Region(Flags),
    /// Boundary-locus point cloud for one sector point.
    Locus(Flags),
    /// Search extrapolation parameters maximizing a region.
    Optimize(Flags),
    /// Integrate a test problem with one step size.
    Integrate(Flags),
    /// Error table and observed orders over a step-size sweep.
    Converge(Flags),
}

#[derive(Args, Debug, Default, Clone)]
#[command(allow_negative_numbers = true)]
pub struct Flags {
    /// JSON configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub print_config: bool,
    /// theta, dimsim2, dimsim3 or dimsim4.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Comma-separated β21, β31, β32, ...
    #[arg(long, value_delimiter = ',')]
    pub beta: Option<Vec<f64>>,
    /// Tableau JSON to check instead of a catalogued method.
    #[arg(long)]
    pub tableau: Option<PathBuf>,
    /// Export only the base tableau.
    #[arg(long)]
    pub base_only: bool,
    /// Sector half-angle in degrees; omit for the explicit region.
    #[arg(long)]
    pub alpha_deg: Option<f64>,
    #[arg(long, value_enum)]
    pub grid: Option<GridPreset>,
    /// Raster cell size.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of boundary rays.
    #[arg(long)]
    pub rays: Option<usize>,
    #[arg(long)]
    pub locus_y: Option<f64>,
    #[arg(long)]
    pub locus_samples: Option<usize>,
    #[arg(long)]
    pub locus_windings: Option<usize>,
    /// Comma-separated optimizer start.
    #[arg(long, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
    /// Also vary θ or λ (first search coordinate).
    #[arg(long)]
    pub vary_parameter: bool,
    /// Objective-evaluation budget.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, value_enum)]
    pub problem: Option<ProblemKind>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub tf: Option<f64>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    /// Treat the whole shallow-water operator explicitly.
    #[arg(long)]
    pub unsplit: bool,
    #[arg(long)]
    pub h: Option<f64>,
    /// Comma-separated step sizes, each half the previous.
    #[arg(long, value_delimiter = ',')]
    pub hs: Option<Vec<f64>>,
    /// Comma-separated methods for `converge`.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub h_ref: Option<f64>,
    #[arg(long)]
    pub ref_tol: Option<f64>,
    /// Write the per-step trace.
    #[arg(long)]
    pub trace: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (flags, cmd): (&Flags, fn(&RunConfig, &Flags) -> Result<(), CliError>) = match &cli.command {
        Command::Check(f) => (f, commands::check),
        Command::Tableau(f) => (f, commands::tableau),
        Command::Region(f) => (f, commands::region),
        Command::Locus(f) => (f, commands::locus),
        Command::Optimize(f) => (f, commands::optimize),
        Command::Integrate(f) => (f, commands::integrate),
        Command::Converge(f) => (f, commands::converge),
    };
    let cfg = RunConfig::load(flags)?;
    if flags.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    cmd(&cfg, flags)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
