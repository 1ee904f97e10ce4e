use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Preset, SchemeName};
use crate::output::Format;

pub const DEFAULT_SEED: u64 = 1;

/// Stochastic replicator dynamics: simulation, fixed points, goodness-of-fit
/// tests and persistence diagnostics.
#[derive(Debug, Parser)]
#[command(name = "replicator", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a full experiment from a TOML config and write the artifact tree.
    Run(RunArgs),
    /// Simulate an ensemble (or one replicator) and print its path.
    Simulate(SimulateArgs),
    /// Stationary Beta/Dirichlet parameters of the mean-field limit.
    FixedPoint(FixedPointArgs),
    /// Interior equilibrium of `A + delta_eff E` by first-order perturbation.
    Perturb(PerturbArgs),
    /// Goodness-of-fit test of a sample against a Beta law.
    TestFit(TestFitArgs),
    /// Propagation-of-chaos error scaling.
    Poc(PocArgs),
    /// Persistence certificate and extinction-set occupation.
    Persistence(PersistenceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Root seed for every random stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (artifact directory for `run`); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

impl Common {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Payoff matrix, rows separated by ';' and entries by ','.
    #[arg(long, allow_hyphen_values = true)]
    pub payoff: Option<String>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Interaction strength.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Validate the config and print the plan without simulating.
    #[arg(long)]
    pub dry_run: bool,
    /// Exit with status 4 if any analysis fails its check.
    #[arg(long)]
    pub check: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct IntegrationArgs {
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    #[arg(long, value_enum, default_value_t = SchemeName::DirectEm)]
    pub scheme: SchemeName,
    /// Initial law: uic, lic or beta:A,B.
    #[arg(long, default_value = "uic")]
    pub init: String,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    #[arg(long, default_value_t = 1)]
    pub particles: usize,
    #[arg(long, default_value_t = 10.0)]
    pub t: f64,
    /// Record every `stride` steps.
    #[arg(long, default_value_t = 1)]
    pub stride: u64,
    /// Common initial point of all particles, e.g. `0.3,0.7`; overrides
    /// `--init`.
    #[arg(long)]
    pub x0: Option<String>,
    /// Integrate a single replicator against this fixed population mean.
    #[arg(long)]
    pub frozen_mean: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct FixedPointArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1e-13)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub delta_eff: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Tn,
    Ad,
}

#[derive(Debug, Clone, Args)]
pub struct TestFitArgs {
    /// Parameters of the Beta null.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub null_beta: Vec<f64>,
    /// CSV sample; an optional header line is skipped.
    #[arg(long)]
    pub input: PathBuf,
    /// Column to read, counted from 1.
    #[arg(long, default_value_t = 1)]
    pub column: usize,
    #[arg(long, value_enum, default_value_t = Method::Tn)]
    pub method: Method,
    /// Null replications.
    #[arg(long = "B", default_value_t = 5000)]
    pub b: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.90, 0.95, 0.99])]
    pub levels: Vec<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct PocArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [100, 400, 1600])]
    pub n_list: Vec<usize>,
    /// Replications per N.
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    #[arg(long, default_value_t = 10.0)]
    pub t: f64,
    /// Size of the reference run for the limiting mean.
    #[arg(long)]
    pub n_ref: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct PersistenceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    /// Also simulate and report the fraction of states in Ext(eps).
    #[arg(long, value_delimiter = ',')]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub particles: usize,
    #[arg(long, default_value_t = 100.0)]
    pub t: f64,
    /// Start of the recorded window.
    #[arg(long, default_value_t = 30.0)]
    pub t_min: f64,
    /// Steps between recorded frames.
    #[arg(long, default_value_t = 10)]
    pub every: u64,
    #[command(flatten)]
    pub common: Common,
}
