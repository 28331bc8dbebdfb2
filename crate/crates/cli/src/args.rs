use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "quadblow", version, about = "Finite-time blowup analysis for quadratic ODEs dX/dt = Q(X)")]
pub struct Cli {
    /// Seed for all randomness; falls back to $QUADBLOW_SEED, then system entropy.
    #[arg(long, global = true, env = "QUADBLOW_SEED")]
    pub seed: Option<u64>,

    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Overwrite an existing output file.
    #[arg(long, global = true)]
    pub force: bool,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate Q(X).
    Eval {
        /// Quadratic map JSON.
        #[arg(long)]
        input: PathBuf,
        /// State vector JSON.
        #[arg(long)]
        x0: PathBuf,
    },
    /// Integrate dX/dt = Q(X) from X0; CSV trajectory plus a JSON status sidecar.
    Integrate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        x0: PathBuf,
        #[command(flatten)]
        integrator: IntegratorArgs,
    },
    /// Spectral blowup report for a matrix initial condition of dX/dt = -X·X.
    Matrix {
        #[arg(long)]
        input: PathBuf,
    },
    /// Invariant lines Q(v) = λv.
    Lines {
        #[arg(long)]
        input: PathBuf,
        /// Number of random starts (default 50·n).
        #[arg(long)]
        starts: Option<usize>,
    },
    /// Degree and Lefschetz number of the circle map (n = 2).
    Degree {
        #[arg(long)]
        input: PathBuf,
        /// Initial number of angle samples.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Search for and verify an invariant-line blowup certificate.
    SearchBlowup {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        starts: Option<usize>,
        #[command(flatten)]
        integrator: IntegratorArgs,
    },
    /// Monte Carlo over random Q: does some initial condition blow up?
    McQ1 {
        #[arg(long)]
        dim: usize,
        #[command(flatten)]
        ensemble: EnsembleArgs,
    },
    /// Monte Carlo over random matrix initial conditions of dX/dt = -X·X.
    McQ2 {
        #[arg(long = "d", visible_alias = "dim")]
        d: usize,
        #[command(flatten)]
        ensemble: EnsembleArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct IntegratorArgs {
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    #[arg(long = "r-max")]
    pub r_max: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub samples: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long = "verify-fraction", default_value_t = 0.05)]
    pub verify_fraction: f64,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
}
