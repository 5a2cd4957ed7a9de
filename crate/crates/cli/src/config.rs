//! Command-line flags. Every argument struct serializes, so the full
//! configuration can be echoed into output headers.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lacelab::walks::DEFAULT_BUDGET;
use serde::Serialize;

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("LACELAB_GIT_DESCRIBE"), ")");

#[derive(Parser, Debug)]
#[command(
    name = "lacelab",
    version = VERSION,
    about = "Lace expansion for weakly self-avoiding walks: enumeration, identities, constants and CLT tables"
)]
pub struct Cli {
    /// Cap on worker threads (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Connectivity C_n for one n, by exact enumeration.
    Enumerate(ModelArgs),
    /// Laces on [0, m] with their compatible edges.
    Laces(LaceArgs),
    /// Lace function Pi_m, optionally truncated in lace order.
    Pi(PiArgs),
    /// Exact check of the lace-expansion recursion for 1 <= n <= nmax.
    VerifyRecursion(ModelArgs),
    /// Connective constant, amplitude and diffusion constant.
    Constants(PipelineArgs),
    /// Pointwise error table of the normalized connectivity against the
    /// Gaussian.
    CltTable(PipelineArgs),
    /// Local CLT error scan for a bounded-range walk.
    LcltScan(ScanArgs),
    /// Full pipeline summary.
    Report(PipelineArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Serialize)]
pub struct OutputArgs {
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

/// Accepts integers and scientific notation such as `1e9`.
fn parse_budget(s: &str) -> Result<u128, String> {
    if let Ok(v) = s.parse::<u128>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() && v.fract() == 0.0 && v < 3.4e38 => Ok(v as u128),
        _ => Err(format!("invalid budget `{s}`")),
    }
}

#[derive(Args, Debug, Serialize)]
pub struct ModelArgs {
    /// Lattice dimension.
    #[arg(long = "d")]
    pub dim: usize,

    /// Interaction strength in [0, 1]; "p/q" or decimal.
    #[arg(long, default_value = "0")]
    pub lambda: String,

    /// Walk length.
    #[arg(long = "nmax", visible_aliases = ["n", "m"])]
    pub n_max: usize,

    /// Exact rational arithmetic.
    #[arg(long)]
    pub exact: bool,

    /// Enumeration budget in path-steps.
    #[arg(long, env = "LACELAB_BUDGET", default_value_t = DEFAULT_BUDGET, value_parser = parse_budget)]
    pub budget: u128,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct PiArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Keep lace orders up to this value only.
    #[arg(long)]
    pub order: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct LaceArgs {
    /// Interval length.
    #[arg(long = "nmax", visible_aliases = ["n", "m"])]
    pub n_max: u32,

    /// Largest number of edges (default: all).
    #[arg(long)]
    pub order: Option<usize>,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct PipelineArgs {
    /// Lattice dimension.
    #[arg(long = "d")]
    pub dim: usize,

    /// Interaction strength in [0, 1]; "p/q" or decimal.
    #[arg(long, default_value = "0")]
    pub lambda: String,

    /// Enumeration depth for walks and lace functions.
    #[arg(long = "nmax", visible_aliases = ["n", "m"], default_value_t = 8)]
    pub n_max: usize,

    /// Length of the mass-constant sequence.
    #[arg(long, default_value_t = 32)]
    pub seq_len: usize,

    /// Largest n in the error table (default: nmax).
    #[arg(long)]
    pub clt_nmax: Option<usize>,

    /// Envelope width (default: 4 delta).
    #[arg(long)]
    pub nu: Option<f64>,

    /// Several envelope widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub nu_grid: Option<Vec<f64>>,

    /// Pipelines run in floating point; accepted for uniformity and rejected.
    #[arg(long)]
    pub exact: bool,

    /// Run the solver outside its guaranteed contraction regime.
    #[arg(long)]
    pub force: bool,

    #[arg(long, env = "LACELAB_BUDGET", default_value_t = DEFAULT_BUDGET, value_parser = parse_budget)]
    pub budget: u128,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Walk {
    /// Stays put with probability 1 - laziness, else a nearest-neighbour step.
    Lazy,
    /// Nearest-neighbour walk (two-periodic).
    Simple,
}

#[derive(Args, Debug, Serialize)]
pub struct ScanArgs {
    /// Lattice dimension.
    #[arg(long = "d")]
    pub dim: usize,

    #[arg(long, value_enum, default_value_t = Walk::Lazy)]
    pub walk: Walk,

    /// Probability of moving, for the lazy walk.
    #[arg(long, default_value = "1/2")]
    pub laziness: String,

    /// Walk lengths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32,64")]
    pub n_list: Vec<usize>,

    /// Width of the comparison Gaussian (default: 2 eta).
    #[arg(long)]
    pub nu: Option<f64>,

    /// Several widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub nu_grid: Option<Vec<f64>>,

    #[arg(long, env = "LACELAB_BUDGET", default_value_t = DEFAULT_BUDGET, value_parser = parse_budget)]
    pub budget: u128,

    #[command(flatten)]
    pub output: OutputArgs,
}

impl Command {
    pub fn output(&self) -> &OutputArgs {
        match self {
            Command::Enumerate(a) | Command::VerifyRecursion(a) => &a.output,
            Command::Laces(a) => &a.output,
            Command::Pi(a) => &a.model.output,
            Command::Constants(a) | Command::CltTable(a) | Command::Report(a) => &a.output,
            Command::LcltScan(a) => &a.output,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_forms() {
        assert_eq!(parse_budget("1000"), Ok(1000));
        assert_eq!(parse_budget("1e9"), Ok(1_000_000_000));
        assert!(parse_budget("1.5").is_err());
        assert!(parse_budget("-3").is_err());
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from(["lacelab", "pi", "--d", "2", "--lambda", "0.1", "--m", "2"]).unwrap();
        match cli.command {
            Command::Pi(a) => {
                assert_eq!((a.model.dim, a.model.n_max), (2, 2));
                assert_eq!(a.model.lambda, "0.1");
            }
            other => panic!("parsed {other:?}"),
        }
        assert!(Cli::try_parse_from(["lacelab", "enumerate", "--d", "2"]).is_err());
    }
}
