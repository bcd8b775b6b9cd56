use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fglasso::sim::Design;
use fglasso::tuning::GridSpec;

/// What `--version` prints and what manifests record.
pub const BUILD_ID: &str = concat!("fglasso ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(name = "fglasso", version = env!("CARGO_PKG_VERSION"), about = "Fused graphical lasso with de-biased tests")]
pub struct Cli {
    /// Worker threads for grid searches and replications (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory, created if missing.
    #[arg(long, global = true, env = "FGLASSO_OUT_DIR", default_value = "fglasso-out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit K precision matrices at fixed (lambda, rho).
    Fit(FitArgs),
    /// Test linear combinations of precision-matrix entries.
    Test(TestArgs),
    /// Choose (lambda, rho) on a grid by AIC.
    SelectTuning(SelectArgs),
    /// Monte-Carlo distribution of the test statistic at chosen entries.
    SimulateFluctuation(SimulateArgs),
    /// Monte-Carlo coverage of the confidence intervals.
    SimulateCoverage(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Observation CSV for one group (header row, one observation per row);
    /// repeat once per group.
    #[arg(long = "data", required = true)]
    pub data: Vec<PathBuf>,

    /// Use the raw second moment instead of centering each column.
    #[arg(long)]
    pub no_center: bool,
}

#[derive(Debug, Args)]
pub struct AdmmArgs {
    /// ADMM step parameter.
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,

    /// Primal and dual stopping tolerance.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,

    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,

    /// Scale the tolerances by p.
    #[arg(long)]
    pub relative: bool,

    /// Weight each group's likelihood term by its sample size.
    #[arg(long)]
    pub n_weighted: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub admm: AdmmArgs,

    /// Sparsity penalty on off-diagonal entries.
    #[arg(long)]
    pub lambda: f64,

    /// Fusion penalty on cross-group differences.
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,

    /// Solve on the correlation scale and map back through the variances.
    #[arg(long)]
    pub weighted: bool,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub admm: AdmmArgs,

    /// Fit JSON written by `fit` or `select-tuning`; otherwise the model is
    /// fitted here from --lambda/--rho.
    #[arg(long, conflicts_with_all = ["lambda", "rho", "weighted"])]
    pub fit: Option<PathBuf>,

    /// Sparsity penalty when fitting here.
    #[arg(long, required_unless_present = "fit")]
    pub lambda: Option<f64>,

    /// Fusion penalty when fitting here (default 0).
    #[arg(long)]
    pub rho: Option<f64>,

    /// Fit on the correlation scale when fitting here.
    #[arg(long)]
    pub weighted: bool,

    /// Coefficients a_1,..,a_K; defaults to 1,-1 for two groups.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub coef: Option<Vec<f64>>,

    /// One-based entry `i,j`; repeatable.
    #[arg(long = "entry", value_parser = parse_entry)]
    pub entries: Vec<(usize, usize)>,

    /// Test every entry of the upper triangle, diagonal included.
    #[arg(long, conflicts_with = "entries")]
    pub all: bool,

    /// Hypothesized value of the linear combination.
    #[arg(long = "null", default_value_t = 0.0, allow_hyphen_values = true)]
    pub null_value: f64,

    /// Test level; intervals have coverage 1 - alpha.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub admm: AdmmArgs,

    #[arg(long, default_value = "0.05:0.3:30")]
    pub lambda_grid: GridSpec,

    #[arg(long, default_value = "0.05:0.3:30")]
    pub rho_grid: GridSpec,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Manifest (or bare experiment config) from an earlier run; replaces
    /// every design flag below.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long, default_value = "equal-null")]
    pub design: Design,

    #[arg(long, default_value_t = 50)]
    pub p: usize,

    #[arg(long, default_value_t = 200)]
    pub n: usize,

    /// Edge probability of the generated precision matrices.
    #[arg(long, default_value_t = 0.1)]
    pub alpha_tilde: f64,

    #[arg(long, default_value_t = 200)]
    pub replications: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    #[arg(long, default_value = "0.05:0.3:30")]
    pub lambda_grid: GridSpec,

    #[arg(long, default_value = "0.05:0.3:30")]
    pub rho_grid: GridSpec,

    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,

    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,

    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,

    #[arg(long)]
    pub no_center: bool,

    /// One-based entry `i,j` to record (fluctuation only); repeatable.
    #[arg(long = "entry", value_parser = parse_entry)]
    pub entries: Vec<(usize, usize)>,

    /// Histogram bins over [-4, 4] (fluctuation only).
    #[arg(long, default_value_t = 32)]
    pub bins: usize,
}

fn parse_entry(s: &str) -> Result<(usize, usize), String> {
    let (i, j) = s
        .split_once(',')
        .ok_or_else(|| format!("expected i,j but got {s:?}"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad index {v:?}: {e}"))
    };
    let (i, j) = (parse(i)?, parse(j)?);
    if i == 0 || j == 0 {
        return Err("entries are one-based".into());
    }
    Ok((i, j))
}
