use std::path::PathBuf;
use std::str::FromStr;

use cachecast::{CostFamily, Parallelism, Scenario};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::schema::SCHEMA;

#[derive(Debug, Parser)]
#[command(name = "cachecast", version, about = "Plan and simulate cache-aided coded multicast", after_long_help = SCHEMA)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the rate and cache-placement solver and record its convergence.
    #[command(after_long_help = SCHEMA)]
    Solve(SolveArgs),
    /// Solve, round, build the codes and run every round end to end.
    #[command(after_long_help = SCHEMA)]
    Simulate(SimulateArgs),
    /// Average the caching variables over many runs, linear against quadratic cache cost.
    #[command(after_long_help = SCHEMA)]
    Place(PlaceArgs),
    /// Compare the caching scenarios over a grid of frame sizes.
    #[command(after_long_help = SCHEMA)]
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Cache cost as given on the command line: `none`, `linear[:a]` or `quadratic[:a]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CostSpec {
    None,
    Linear(Option<f64>),
    Quadratic(Option<f64>),
}

impl CostSpec {
    /// Resolves a missing coefficient with the given defaults.
    pub fn family(self, linear: f64, quadratic: f64) -> CostFamily {
        match self {
            CostSpec::None => CostFamily::Zero,
            CostSpec::Linear(a) => CostFamily::Linear { slope: a.unwrap_or(linear) },
            CostSpec::Quadratic(a) => CostFamily::Quadratic { coeff: a.unwrap_or(quadratic) },
        }
    }
}

impl FromStr for CostSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, coeff) = match s.split_once(':') {
            Some((n, c)) => {
                let a: f64 = c.parse().map_err(|_| format!("bad coefficient `{c}`"))?;
                if !(a.is_finite() && a >= 0.0) {
                    return Err(format!("coefficient {a} must be finite and nonnegative"));
                }
                (n, Some(a))
            }
            None => (s, None),
        };
        match (name, coeff) {
            ("none" | "zero", None) => Ok(CostSpec::None),
            ("linear", a) => Ok(CostSpec::Linear(a)),
            ("quadratic", a) => Ok(CostSpec::Quadratic(a)),
            _ => Err(format!("unknown cache cost `{s}` (expected none, linear[:a] or quadratic[:a])")),
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct Common {
    /// Fixture name (butterfly, service, cdn) or path to a topology file.
    #[arg(long, default_value = "butterfly")]
    pub topology: String,
    /// Frame size B in link-capacity units. Defaults to 3.6, 5 and 6 for the fixtures.
    #[arg(long = "B")]
    pub frame_size: Option<f64>,
    /// Number of rounds M.
    #[arg(long = "M", default_value_t = 100)]
    pub rounds: usize,
    /// Seed for every random choice.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Solver iteration budget.
    #[arg(long, default_value_t = 200_000)]
    pub max_iters: usize,
    /// Directory receiving the output files.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Format of the tabular outputs.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Run independent jobs on one thread.
    #[arg(long)]
    pub sequential: bool,
}

impl Common {
    pub fn parallelism(&self) -> Parallelism {
        if self.sequential {
            Parallelism::Sequential
        } else {
            Parallelism::Parallel
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    /// Which nodes may cache: no, edge, peer, edge+peer or all.
    #[arg(long, default_value = "all")]
    pub scenario: Scenario,
    /// Cache cost: none, linear[:a] (default a = 10) or quadratic[:a] (default a = 5).
    #[arg(long, default_value = "none")]
    pub cache_cost: CostSpec,
    /// Update sparsity ε in the units of B. Defaults to 1% of B.
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Clone, Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Which nodes may cache: no, edge, peer, edge+peer or all.
    #[arg(long, default_value = "all")]
    pub scenario: Scenario,
    /// Cache cost: none, linear[:a] (default a = 10) or quadratic[:a] (default a = 5).
    #[arg(long, default_value = "none")]
    pub cache_cost: CostSpec,
    /// Symbols per frame. Defaults to B rounded up.
    #[arg(long)]
    pub symbols: Option<usize>,
    /// Symbols changed between consecutive frames. Defaults to 1% of the symbols, at least 1.
    #[arg(long)]
    pub eps: Option<usize>,
}

#[derive(Clone, Debug, Args)]
pub struct PlaceArgs {
    #[command(flatten)]
    pub common: Common,
    /// Independent runs per cost family.
    #[arg(long, default_value_t = 40)]
    pub runs: usize,
    /// Slope of the linear cache cost.
    #[arg(long, default_value_t = 0.5)]
    pub linear: f64,
    /// Coefficient of the quadratic cache cost.
    #[arg(long, default_value_t = 1.0)]
    pub quadratic: f64,
    /// Update sparsity ε in the units of B. Defaults to 1% of B.
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Clone, Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated frame sizes. Defaults to 0.6, 0.8 and 1.0 times B.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
    /// Comma-separated scenarios to compare.
    #[arg(long, value_delimiter = ',', default_value = "no,edge,peer,edge+peer")]
    pub scenarios: Vec<Scenario>,
    /// Cache cost: none, linear[:a] (default a = 10) or quadratic[:a] (default a = 5).
    #[arg(long, default_value = "none")]
    pub cache_cost: CostSpec,
    /// Also simulate every point with the default simulation settings.
    #[arg(long)]
    pub simulate: bool,
}
