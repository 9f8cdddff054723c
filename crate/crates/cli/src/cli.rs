use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pmu_core::{
    Algorithm, ConstraintKind, EstimationSettings, MuChoice, ObjectiveKind,
};

#[derive(Parser, Debug)]
#[command(name = "pmu-place", version, about = "PMU placement for grid state estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one algorithm at one budget and write its report and trace.
    Solve(SolveArgs),
    /// Run algorithms over a range of budgets and write a CSV summary.
    Sweep(SweepArgs),
    /// Minimum PMU counts for complete and depth-one observability.
    Table1(Table1Args),
    /// Smallest budget whose local-search MSE meets a tolerance.
    MinPmu(MinPmuArgs),
    /// Compare the analytic MSE of a placement with a simulated one.
    Montecarlo(MonteCarloArgs),
    /// Dump the parsed network as JSON.
    Snapshot(SnapshotArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlgArg {
    PenalizedMmse,
    PenalizedMi,
    LocalSearch,
    BoxRelax,
}

impl From<AlgArg> for Algorithm {
    fn from(a: AlgArg) -> Self {
        match a {
            AlgArg::PenalizedMmse => Algorithm::PenalizedMmse,
            AlgArg::PenalizedMi => Algorithm::PenalizedMi,
            AlgArg::LocalSearch => Algorithm::LocalSearch,
            AlgArg::BoxRelax => Algorithm::BoxRelaxBaseline,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Mse,
    Mi,
}

impl From<ObjectiveArg> for ObjectiveKind {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Mse => ObjectiveKind::Mse,
            ObjectiveArg::Mi => ObjectiveKind::Mi,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConstraintArg {
    Complete,
    DepthOne,
    None,
}

impl From<ConstraintArg> for ConstraintKind {
    fn from(c: ConstraintArg) -> Self {
        match c {
            ConstraintArg::Complete => ConstraintKind::Complete,
            ConstraintArg::DepthOne => ConstraintKind::DepthOne,
            ConstraintArg::None => ConstraintKind::None,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Bundled case name (ieee30, ieee39, ieee57, ieee118) or a MATPOWER file.
    #[arg(long)]
    pub case: String,
    /// Voltage-phasor noise variance r.
    #[arg(long, default_value_t = 0.01)]
    pub noise_r: f64,
    /// Branch-current noise variance ρ.
    #[arg(long, default_value_t = 0.02)]
    pub noise_rho: f64,
    /// Factor applied to MW injections; defaults to 1/baseMVA.
    #[arg(long)]
    pub injection_scale: Option<f64>,
}

impl ModelArgs {
    pub fn settings(&self) -> EstimationSettings {
        EstimationSettings {
            injection_scale: self.injection_scale,
            voltage_noise: self.noise_r,
            branch_noise: self.noise_rho,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct PenaltyArgs {
    /// Exponent L of the binary penalty.
    #[arg(long = "L", default_value_t = 1.5)]
    pub exponent: f64,
    /// Penalty weight, or "auto".
    #[arg(long, default_value = "auto", value_parser = parse_mu)]
    pub mu: MuChoice,
    /// Skip the constraint-preserving swap search after rounding.
    #[arg(long)]
    pub no_polish: bool,
}

fn parse_mu(s: &str) -> Result<MuChoice, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(MuChoice::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(MuChoice::Fixed(v)),
        _ => Err(format!("expected \"auto\" or a positive number, got '{s}'")),
    }
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum)]
    pub alg: AlgArg,
    /// Objective for local search and the box baseline.
    #[arg(long, value_enum, default_value = "mse")]
    pub objective: ObjectiveArg,
    /// Observability constraint; penalized runs default to complete.
    #[arg(long, value_enum)]
    pub constraint: Option<ConstraintArg>,
    /// Number of PMUs.
    #[arg(long = "S")]
    pub budget: usize,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Print every iteration record to stderr.
    #[arg(long)]
    pub debug: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Algorithms to run at every budget.
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub algs: Vec<AlgArg>,
    #[arg(long, value_enum, default_value = "mse")]
    pub objective: ObjectiveArg,
    #[arg(long, value_enum, default_value = "complete")]
    pub constraint: ConstraintArg,
    /// Budget range, inclusive, as FROM..TO.
    #[arg(long = "S-range", value_parser = parse_range)]
    pub range: (usize, usize),
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected FROM..TO, got '{s}'"))?;
    let a = a.trim().parse::<usize>().map_err(|e| e.to_string())?;
    let b = b.trim().trim_start_matches('=').parse::<usize>().map_err(|e| e.to_string())?;
    Ok((a, b))
}

#[derive(Args, Debug)]
pub struct Table1Args {
    /// Branch-and-bound node limit per problem.
    #[arg(long, default_value_t = 1_000_000)]
    pub node_limit: usize,
    /// Also write the table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MinPmuArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// MSE tolerance.
    #[arg(long)]
    pub tolerance: f64,
    /// Starting budget; N/2 by default.
    #[arg(long)]
    pub s0: Option<usize>,
    #[arg(long)]
    pub bisection: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Metered buses by case-file bus number, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "alg")]
    pub buses: Option<Vec<u32>>,
    /// Produce the placement with this algorithm instead.
    #[arg(long, value_enum, requires = "budget")]
    pub alg: Option<AlgArg>,
    #[arg(long = "S")]
    pub budget: Option<usize>,
    #[arg(long, value_enum)]
    pub constraint: Option<ConstraintArg>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the result as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SnapshotArgs {
    #[arg(long)]
    pub case: String,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
