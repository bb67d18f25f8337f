//! Command-line surface. Every option is optional at parse time so that
//! values missing on the command line can come from `--config`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rpclab_core::AtomicMeasure;

use crate::config::{Format, GSelector};

#[derive(Debug, Parser)]
#[command(
    name = "rpclab",
    version,
    about = "Parisi functional on Ruelle probability cascades"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parisi functional and the SK variational functional G at one measure.
    Eval(EvalArgs),
    /// Monte Carlo cascade estimate of the functional, against quadrature.
    Simulate(SimulateArgs),
    /// Exact q- and x-derivatives with finite-difference checks.
    Derivatives(DerivativesArgs),
    /// Minimize G over k-atom measures.
    Minimize(MinimizeArgs),
    /// Almeida-Thouless line beta_AT(h).
    AtLine(AtLineArgs),
    /// Finite-N SK pressure by exact enumeration.
    SkOracle(SkOracleArgs),
    /// Cross-module property suites; exits 1 on any failure.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct Io {
    /// key = value file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// json or csv.
    #[arg(long)]
    pub format: Option<Format>,
    /// Worker threads (0: all cores). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Model {
    /// Measure as q:x pairs with cumulative masses, e.g. 0.3:0.5,1:1.
    #[arg(long)]
    pub measure: Option<AtomicMeasure>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub h: Option<f64>,
    /// Covariance g: linear or half-square.
    #[arg(long)]
    pub g: Option<GSelector>,
}

#[derive(Debug, Args)]
pub struct Grid {
    /// Gauss-Hermite order.
    #[arg(long)]
    pub n_h: Option<usize>,
    /// Spatial grid nodes.
    #[arg(long)]
    pub n_y: Option<usize>,
    /// Spatial half-width Y (default chosen from g and psi).
    #[arg(long)]
    pub half_width: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Mc {
    /// Children per node of the truncated cascade (B).
    #[arg(long)]
    pub branching: Option<usize>,
    /// Independent cascades.
    #[arg(long)]
    pub samples: Option<usize>,
    /// RNG seed (required by every command that draws random numbers).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub io: Io,
    #[command(flatten)]
    pub model: Model,
    #[command(flatten)]
    pub grid: Grid,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub io: Io,
    #[command(flatten)]
    pub model: Model,
    #[command(flatten)]
    pub grid: Grid,
    #[command(flatten)]
    pub mc: Mc,
    /// Comma-separated levels q at which to evaluate with psi_q.
    #[arg(long)]
    pub levels: Option<String>,
}

#[derive(Debug, Args)]
pub struct DerivativesArgs {
    #[command(flatten)]
    pub io: Io,
    #[command(flatten)]
    pub model: Model,
    #[command(flatten)]
    pub grid: Grid,
    /// Finite-difference step.
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MinimizeArgs {
    #[command(flatten)]
    pub io: Io,
    #[command(flatten)]
    pub model: Model,
    #[command(flatten)]
    pub grid: Grid,
    /// Atom budget.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Exit tolerance on the projected-gradient step.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AtLineArgs {
    #[command(flatten)]
    pub io: Io,
    /// Field values; a single number or a comma-separated list.
    #[arg(long)]
    pub h: Option<String>,
    /// Bisection bracket in beta, as lo,hi.
    #[arg(long)]
    pub bracket: Option<String>,
    /// Also write the curve as CSV (h, beta_at).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SkOracleArgs {
    #[command(flatten)]
    pub io: Io,
    #[command(flatten)]
    pub model: Model,
    #[command(flatten)]
    pub grid: Grid,
    /// Spin count N (at most 16).
    #[arg(long)]
    pub spins: Option<usize>,
    /// Disorder draws.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub io: Io,
    #[command(flatten)]
    pub model: Model,
    #[command(flatten)]
    pub grid: Grid,
    #[command(flatten)]
    pub mc: Mc,
    /// overlap, bs, rem, grem, linearity, derivatives or all.
    #[arg(long)]
    pub suite: Option<String>,
}
