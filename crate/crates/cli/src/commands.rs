use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fglasso::io::{
    read_fit_record, read_observations_file, test_results_json, write_aic_table_csv, write_coverage_csv,
    write_histogram_csv, write_json, write_matrix_csv, write_test_results_csv, write_z_samples_csv,
    FitRecord,
};
use fglasso::matrix::{CovarianceSummary, MultiGroupDataset, SymMatrix};
use fglasso::sim::{
    histogram, ks_critical_value, ks_statistic_normal, mean_sd, run_coverage, run_fluctuation,
    ExperimentConfig,
};
use fglasso::solver::{fit_fgl, fit_fgl_weighted, kkt_check, unscale, AdmmSettings, FglFit, KktReport, Scale};
use fglasso::tuning::{penalty_grid, select_tuning_aic};
use fglasso::{debias_thetas, test_linear, LinearHypothesis, PenaltyParams, TestResult};
use serde::{Deserialize, Serialize};

use crate::args::{AdmmArgs, DataArgs, FitArgs, SelectArgs, SimulateArgs, TestArgs, BUILD_ID};

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    NotConverged,
}

impl Outcome {
    fn from_converged(converged: bool) -> Self {
        if converged {
            Outcome::Done
        } else {
            Outcome::NotConverged
        }
    }
}

struct Loaded {
    summaries: Vec<CovarianceSummary>,
    ns: Vec<usize>,
}

impl Loaded {
    fn sigmas(&self) -> Vec<SymMatrix> {
        self.summaries.iter().map(|s| s.sigma.clone()).collect()
    }

    fn scales(&self) -> Vec<Vec<f64>> {
        self.summaries.iter().map(|s| s.w.diagonal()).collect()
    }
}

fn load(args: &DataArgs) -> Result<Loaded> {
    let mut groups = Vec::with_capacity(args.data.len());
    let mut labels = Vec::with_capacity(args.data.len());
    for path in &args.data {
        let obs = read_observations_file(path).with_context(|| format!("reading {}", path.display()))?;
        groups.push(obs.data);
        labels.push(path.display().to_string());
    }
    let dataset = MultiGroupDataset::new(groups, labels)?;
    Ok(Loaded {
        summaries: dataset.summaries(!args.no_center)?,
        ns: dataset.sample_sizes(),
    })
}

fn settings(args: &AdmmArgs, ns: &[usize]) -> AdmmSettings {
    AdmmSettings {
        eta: args.eta,
        tol_primal: args.tol,
        tol_dual: args.tol,
        max_iter: args.max_iter,
        relative: args.relative,
        loss_weights: args.n_weighted.then(|| ns.iter().map(|&n| n as f64).collect()),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_thetas(dir: &Path, prefix: &str, thetas: &[SymMatrix]) -> Result<()> {
    for (k, t) in thetas.iter().enumerate() {
        write_matrix_csv(create(dir, &format!("{prefix}_{}.csv", k + 1))?, t)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    converged: bool,
    iterations: usize,
    primal_residual: f64,
    dual_residual: f64,
    kkt: &'a KktReport,
}

/// Writes `fit.json`, the theta CSVs, and `kkt.json`.
fn persist_fit(dir: &Path, fit: &FglFit, kkt_sigmas: &[SymMatrix], thetas_w: Option<&[SymMatrix]>) -> Result<()> {
    write_json(create(dir, "fit.json")?, &FitRecord::from_fit(fit))?;
    match thetas_w {
        Some(tw) => {
            write_thetas(dir, "theta_R", &fit.thetas)?;
            write_thetas(dir, "theta_w", tw)?;
        }
        None => write_thetas(dir, "theta", &fit.thetas)?,
    }
    let kkt = kkt_check(fit, kkt_sigmas, &fit.params)?;
    let diag = Diagnostics {
        converged: fit.converged,
        iterations: fit.iterations,
        primal_residual: fit.primal_residual,
        dual_residual: fit.dual_residual,
        kkt: &kkt,
    };
    write_json(create(dir, "kkt.json")?, &diag)?;
    Ok(())
}

pub fn fit(args: &FitArgs, out: &Path) -> Result<Outcome> {
    let data = load(&args.data)?;
    let admm = settings(&args.admm, &data.ns);
    let fit = if args.weighted {
        let params = PenaltyParams::weighted(args.lambda, args.rho)?;
        let wf = fit_fgl_weighted(&data.sigmas(), &params, &admm)?;
        let rs: Vec<SymMatrix> = data.summaries.iter().map(|s| s.r.clone()).collect();
        persist_fit(out, &wf.fit_r, &rs, Some(&wf.thetas_w))?;
        wf.fit_r
    } else {
        let params = PenaltyParams::new(args.lambda, args.rho)?;
        let sigmas = data.sigmas();
        let fit = fit_fgl(&sigmas, &params, &admm)?;
        persist_fit(out, &fit, &sigmas, None)?;
        fit
    };
    Ok(Outcome::from_converged(fit.converged))
}

#[derive(Serialize)]
struct Selection {
    lambda: f64,
    rho: f64,
    aic: f64,
    converged: bool,
}

pub fn select_tuning(args: &SelectArgs, out: &Path) -> Result<Outcome> {
    let data = load(&args.data)?;
    let admm = settings(&args.admm, &data.ns);
    let sigmas = data.sigmas();
    let grid = penalty_grid(&args.lambda_grid, &args.rho_grid);
    let sel = select_tuning_aic(&sigmas, &data.ns, &grid, &admm)?;
    write_aic_table_csv(create(out, "aic.csv")?, &sel.table)?;
    let best_row = sel
        .table
        .iter()
        .find(|r| r.lambda == sel.best.lambda && r.rho == sel.best.rho)
        .context("selected point missing from the AIC table")?;
    write_json(
        create(out, "selection.json")?,
        &Selection {
            lambda: best_row.lambda,
            rho: best_row.rho,
            aic: best_row.aic,
            converged: best_row.converged,
        },
    )?;
    persist_fit(out, &sel.best_fit, &sigmas, None)?;
    Ok(Outcome::from_converged(sel.best_fit.converged))
}

pub fn test(args: &TestArgs, out: &Path) -> Result<Outcome> {
    let data = load(&args.data)?;
    let k = data.ns.len();
    let sigmas = data.sigmas();

    // penalized estimates on the original scale, used for both the
    // de-biasing step and the variance estimate
    let (thetas, converged) = match &args.fit {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let rec = read_fit_record(file).with_context(|| format!("reading {}", path.display()))?;
            if rec.k != k || rec.p != sigmas[0].dim() {
                bail!(
                    "fit has K={}, p={} but the data have K={k}, p={}",
                    rec.k,
                    rec.p,
                    sigmas[0].dim()
                );
            }
            let thetas = match rec.scale {
                Scale::Covariance => rec.thetas,
                Scale::Correlation => rec
                    .thetas
                    .iter()
                    .zip(data.scales())
                    .map(|(t, w)| unscale(t, &w))
                    .collect::<fglasso::Result<Vec<_>>>()?,
            };
            (thetas, rec.converged)
        }
        None => {
            let lambda = args.lambda.context("--lambda is required without --fit")?;
            let rho = args.rho.unwrap_or(0.0);
            let admm = settings(&args.admm, &data.ns);
            if args.weighted {
                let wf = fit_fgl_weighted(&sigmas, &PenaltyParams::weighted(lambda, rho)?, &admm)?;
                (wf.thetas_w, wf.fit_r.converged)
            } else {
                let fit = fit_fgl(&sigmas, &PenaltyParams::new(lambda, rho)?, &admm)?;
                (fit.thetas, fit.converged)
            }
        }
    };

    let coefficients = match &args.coef {
        Some(c) => c.clone(),
        None if k == 2 => vec![1.0, -1.0],
        None if k == 1 => vec![1.0],
        None => bail!("--coef is required with {k} groups"),
    };
    if coefficients.len() != k {
        bail!("{} coefficients given for {k} groups", coefficients.len());
    }

    let p = sigmas[0].dim();
    let entries: Vec<(usize, usize)> = if args.all {
        (0..p).flat_map(|i| (i..p).map(move |j| (i, j))).collect()
    } else if args.entries.is_empty() {
        bail!("give at least one --entry i,j or --all");
    } else {
        args.entries.iter().map(|&(i, j)| (i - 1, j - 1)).collect()
    };

    let db = debias_thetas(&thetas, &sigmas, &data.ns)?;
    db.common_n()?;
    let results = entries
        .iter()
        .map(|&(i, j)| {
            let hyp = LinearHypothesis::new(coefficients.clone(), i, j)?;
            test_linear(&db, &hyp, args.null_value, args.alpha)
        })
        .collect::<fglasso::Result<Vec<TestResult>>>()?;

    write_test_results_csv(create(out, "tests.csv")?, &results, k)?;
    write_json(create(out, "tests.json")?, &test_results_json(&results))?;
    Ok(Outcome::from_converged(converged))
}

/// Config echo written next to simulation outputs; `--config` accepts it.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
}

fn experiment_config(args: &SimulateArgs, command: &str) -> Result<(ExperimentConfig, usize)> {
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("config").is_some() {
            let manifest: Manifest = serde_json::from_value(value)?;
            if manifest.command != command {
                bail!("manifest was written by {}, not {command}", manifest.command);
            }
            return Ok((manifest.config, manifest.bins.unwrap_or(args.bins)));
        }
        return Ok((serde_json::from_value(value)?, args.bins));
    }
    let mut cfg = ExperimentConfig::new(args.design);
    cfg.p = args.p;
    cfg.n = args.n;
    cfg.alpha_tilde = args.alpha_tilde;
    cfg.replications = args.replications;
    cfg.seed = args.seed;
    cfg.lambda_grid = args.lambda_grid;
    cfg.rho_grid = args.rho_grid;
    cfg.alpha = args.alpha;
    cfg.center = !args.no_center;
    cfg.admm = AdmmSettings {
        eta: args.eta,
        tol_primal: args.tol,
        tol_dual: args.tol,
        max_iter: args.max_iter,
        ..AdmmSettings::default()
    };
    if !args.entries.is_empty() {
        cfg.entries = args.entries.clone();
    } else {
        cfg.entries.retain(|&(i, j)| i <= cfg.p && j <= cfg.p);
    }
    Ok((cfg, args.bins))
}

fn write_manifest(out: &Path, command: &str, cfg: &ExperimentConfig, bins: Option<usize>) -> Result<()> {
    let manifest = Manifest {
        command: command.to_string(),
        version: BUILD_ID.to_string(),
        config: cfg.clone(),
        bins,
    };
    write_json(create(out, "manifest.json")?, &manifest)?;
    Ok(())
}

fn write_selected(out: &Path, selected: &[PenaltyParams]) -> Result<()> {
    use std::io::Write;
    let mut w = create(out, "selected.csv")?;
    writeln!(w, "replication,lambda,rho")?;
    for (r, s) in selected.iter().enumerate() {
        writeln!(w, "{},{},{}", r + 1, s.lambda, s.rho)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EntrySummary {
    i: usize,
    j: usize,
    mean: f64,
    sd: f64,
    ks_statistic: f64,
    ks_critical_1pct: f64,
}

#[derive(Serialize)]
struct FluctuationSummary {
    design: fglasso::sim::Design,
    p: usize,
    n: usize,
    alpha_tilde: f64,
    replications: usize,
    entries: Vec<EntrySummary>,
}

pub fn simulate_fluctuation(args: &SimulateArgs, out: &Path) -> Result<Outcome> {
    const COMMAND: &str = "simulate-fluctuation";
    let (cfg, bins) = experiment_config(args, COMMAND)?;
    let result = run_fluctuation(&cfg)?;
    write_manifest(out, COMMAND, &cfg, Some(bins))?;
    write_z_samples_csv(create(out, "z_samples.csv")?, &result)?;

    let mut hists = Vec::with_capacity(result.entries.len());
    let mut entries = Vec::with_capacity(result.entries.len());
    for (e, &(i, j)) in result.entries.iter().enumerate() {
        let z = result.samples_for(e);
        let (mean, sd) = mean_sd(&z);
        entries.push(EntrySummary {
            i,
            j,
            mean,
            sd,
            ks_statistic: ks_statistic_normal(&z),
            ks_critical_1pct: ks_critical_value(z.len(), 0.01),
        });
        hists.push(((i, j), histogram(&z, -4.0, 4.0, bins)));
    }
    write_histogram_csv(create(out, "histogram.csv")?, &hists)?;
    write_selected(out, &result.selected)?;
    write_json(
        create(out, "summary.json")?,
        &FluctuationSummary {
            design: cfg.design,
            p: cfg.p,
            n: cfg.n,
            alpha_tilde: cfg.alpha_tilde,
            replications: cfg.replications,
            entries,
        },
    )?;
    Ok(Outcome::Done)
}

/// One row of the coverage table.
#[derive(Serialize)]
struct CoverageSummary {
    design: fglasso::sim::Design,
    alpha_tilde: f64,
    p: usize,
    n: usize,
    replications: usize,
    #[serde(rename = "avg_cov_S")]
    avg_cov_s: f64,
    #[serde(rename = "avg_cov_Sc")]
    avg_cov_sc: f64,
}

pub fn simulate_coverage(args: &SimulateArgs, out: &Path) -> Result<Outcome> {
    const COMMAND: &str = "simulate-coverage";
    let (cfg, _) = experiment_config(args, COMMAND)?;
    let report = run_coverage(&cfg)?;
    write_manifest(out, COMMAND, &cfg, None)?;
    write_coverage_csv(create(out, "coverage.csv")?, &report)?;
    write_selected(out, &report.selected)?;
    write_json(
        create(out, "summary.json")?,
        &CoverageSummary {
            design: cfg.design,
            alpha_tilde: cfg.alpha_tilde,
            p: cfg.p,
            n: cfg.n,
            replications: cfg.replications,
            avg_cov_s: report.avg_cov_s,
            avg_cov_sc: report.avg_cov_sc,
        },
    )?;
    Ok(Outcome::Done)
}

pub fn ensure_dir(dir: &PathBuf) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}
