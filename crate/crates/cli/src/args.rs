use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "fpp",
    version,
    about = "First-passage percolation across thin cylinders",
    args_override_self = true
)]
pub struct Cli {
    /// File of key=value lines supplying flag values; explicit flags win
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts [default: fpp-out]
    #[arg(long, global = true, value_name = "DIR", env = "FPP_OUTPUT_DIR", hide_env_values = true)]
    pub out: Option<PathBuf>,
    /// Worker threads [default: available parallelism]
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one Monte Carlo experiment and write manifest.json and samples.csv
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Run one experiment per (n, h) grid point
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
    /// Solve the exponent schedule and write schedule.csv
    #[command(args_override_self = true)]
    Schedule(ScheduleArgs),
    /// Run statistical checks on persisted runs; exit 1 if any fails
    #[command(args_override_self = true)]
    Verify(VerifyArgs),
    /// Write summary, QQ and covariance tables of persisted runs
    #[command(args_override_self = true)]
    Analyze(AnalyzeArgs),
}

/// Flags shared by `simulate` and `sweep`.
#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Dimension d; the base is the box [-h,h]^(d-1)
    #[arg(long, value_name = "D")]
    pub d: Option<u32>,
    /// Weight law as family:params, e.g. exponential:1, uniform:0,1, or file:<path>
    #[arg(long, value_name = "LAW")]
    pub dist: Option<String>,
    /// Comma separated functionals: T, t, a, pi, L, blocks:<l>, process:<f/f/...>
    #[arg(long, value_name = "LIST")]
    pub functionals: Option<String>,
    /// Number of replicates
    #[arg(long, value_name = "R")]
    pub reps: Option<u64>,
    /// Master seed
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Stream namespace of the run
    #[arg(long, value_name = "K")]
    pub namespace: Option<u64>,
    /// Initial strip margin for the functional a
    #[arg(long, value_name = "M")]
    pub margin: Option<u32>,
    /// Largest strip margin [default: 8n]
    #[arg(long, value_name = "M")]
    pub margin_cap: Option<u32>,
    /// Keep raw samples (true or false)
    #[arg(long, value_name = "BOOL")]
    pub retain: Option<bool>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Cylinder length n
    #[arg(long, value_name = "N")]
    pub n: Option<u32>,
    /// Box half-width h
    #[arg(long, value_name = "H")]
    pub h: Option<u32>,
    /// Explicit base graph file: `v k origin` then k lines `u w`
    #[arg(long, value_name = "FILE")]
    pub base_file: Option<PathBuf>,
    #[command(flatten)]
    pub plan: PlanArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma separated lengths
    #[arg(long, value_name = "LIST")]
    pub ns: Option<String>,
    /// Comma separated fixed widths h
    #[arg(long, value_name = "LIST")]
    pub hs: Option<String>,
    /// Comma separated width exponents; h = floor(n^alpha)
    #[arg(long, value_name = "LIST")]
    pub alphas: Option<String>,
    #[command(flatten)]
    pub plan: PlanArgs,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Moment index q >= 2 [default: floor(p/2) when p is given]
    #[arg(long, value_name = "Q")]
    pub q: Option<u32>,
    /// Growth exponent theta >= 1
    #[arg(long, value_name = "THETA")]
    pub theta: Option<f64>,
    /// Schedule depth t >= 1
    #[arg(long, value_name = "T")]
    pub t: Option<u32>,
    /// Moment order p > 2 for the CLT threshold (inf allowed)
    #[arg(long, value_name = "P")]
    pub p: Option<f64>,
    /// Dimension d for the box form of the threshold
    #[arg(long, value_name = "D")]
    pub d: Option<u32>,
    /// Exponent at which the conditions are evaluated [default: alpha_star]
    #[arg(long, value_name = "ALPHA")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Comma separated run directories [default: the output directory]
    #[arg(long, value_name = "DIRS")]
    pub runs: Option<String>,
    /// Comma separated checks: sandwich, normality, scaling, donsker, tails [default: all applicable]
    #[arg(long, value_name = "LIST")]
    pub checks: Option<String>,
    /// Functional for the normality and scaling checks [default: T, else first present]
    #[arg(long, value_name = "NAME")]
    pub functional: Option<String>,
    /// Moment order of the gap bound in the sandwich check [default: 2]
    #[arg(long, value_name = "P")]
    pub p: Option<f64>,
    /// Moment order of the geodesic tail check [default: 4]
    #[arg(long, value_name = "P")]
    pub tail_p: Option<f64>,
    /// Smallest accepted KS p-value [default: 0.01]
    #[arg(long, value_name = "P")]
    pub min_p: Option<f64>,
    /// Largest accepted absolute skewness [default: 0.2]
    #[arg(long, value_name = "S")]
    pub max_skew: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Comma separated run directories [default: the output directory]
    #[arg(long, value_name = "DIRS")]
    pub runs: Option<String>,
    /// Comma separated sample columns for the QQ table [default: all except block columns]
    #[arg(long, value_name = "LIST")]
    pub functionals: Option<String>,
}
