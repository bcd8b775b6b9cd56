use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FglError, Result};
use crate::inference::{debias, test_linear, LinearHypothesis};
use crate::matrix::{sample_covariance, SymMatrix};
use crate::penalty::PenaltyParams;
use crate::solver::{fit_fgl, AdmmSettings};
use crate::tuning::{penalty_grid, select_tuning_aic, GridSpec};

use super::decompose::decompose_debias_error;
use super::generate::{derive_seed, generate_precision, sample_with_covariance, GroundTruth, PrecisionGenConfig};

const STREAM_TRUTH: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
const STREAM_RATE: u64 = 3;

/// Null designs for the simulated groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    /// `Θ₀¹ = Θ₀²`, testing `a = (1, −1)`.
    EqualNull,
    /// `Θ₀² = 0.5 Θ₀¹`, testing `a = (0.5, −1)`.
    LinearNull,
    /// `Θ₀³ = 0.6 Θ₀¹ + 0.9 Θ₀²`, testing `a = (0.6, 0.9, −1)`, with the
    /// first two groups drawn at edge densities 0.01 and 0.1.
    ThreeSampleLinearNull,
}

impl Design {
    pub fn coefficients(&self) -> Vec<f64> {
        match self {
            Design::EqualNull => vec![1.0, -1.0],
            Design::LinearNull => vec![0.5, -1.0],
            Design::ThreeSampleLinearNull => vec![0.6, 0.9, -1.0],
        }
    }

    pub fn groups(&self) -> usize {
        self.coefficients().len()
    }

    /// Population precision matrices for this design. `alpha_tilde` is
    /// ignored by the three-sample design.
    pub fn build_truth(&self, p: usize, alpha_tilde: f64, seed: u64) -> Result<GroundTruth> {
        let gen = |a: f64, idx: u64| {
            generate_precision(&PrecisionGenConfig {
                p,
                alpha_tilde: a,
                seed: derive_seed(seed, STREAM_TRUTH, idx),
            })
            .map(|t| t.theta0.into_iter().next().expect("single group"))
        };
        let thetas = match self {
            Design::EqualNull => {
                let t = gen(alpha_tilde, 0)?;
                vec![t.clone(), t]
            }
            Design::LinearNull => {
                let t = gen(alpha_tilde, 0)?;
                let half = t.scaled(0.5);
                vec![t, half]
            }
            Design::ThreeSampleLinearNull => {
                let t1 = gen(0.01, 0)?;
                let t2 = gen(0.1, 1)?;
                let t3 = SymMatrix::from_upper(t1.as_matrix() * 0.6 + t2.as_matrix() * 0.9)?;
                vec![t1, t2, t3]
            }
        };
        GroundTruth::from_thetas(thetas)
    }

    /// Membership of entry `(i, j)` in the reference nonzero set: the first
    /// group's support for the two-sample designs, the third group's for the
    /// three-sample design. Diagonal entries are always members.
    pub fn in_support(&self, truth: &GroundTruth, i: usize, j: usize) -> bool {
        let reference = match self {
            Design::ThreeSampleLinearNull => &truth.theta0[2],
            _ => &truth.theta0[0],
        };
        reference.get(i, j) != 0.0
    }
}

impl std::str::FromStr for Design {
    type Err = FglError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal-null" | "equal" => Ok(Design::EqualNull),
            "linear-null" | "linear" => Ok(Design::LinearNull),
            "three-sample-linear-null" | "three-sample" => Ok(Design::ThreeSampleLinearNull),
            other => Err(FglError::InvalidInput(format!(
                "unknown design {other:?}; expected equal-null, linear-null or three-sample-linear-null"
            ))),
        }
    }
}

/// Full description of a Monte-Carlo run; serializes into the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub design: Design,
    pub p: usize,
    pub n: usize,
    pub alpha_tilde: f64,
    pub replications: usize,
    pub seed: u64,
    pub lambda_grid: GridSpec,
    pub rho_grid: GridSpec,
    #[serde(default)]
    pub admm: AdmmSettings,
    /// Test level; the confidence intervals have level `1 − alpha`.
    pub alpha: f64,
    pub center: bool,
    /// One-based `(i, j)` entries recorded by fluctuation runs.
    #[serde(default)]
    pub entries: Vec<(usize, usize)>,
}

impl ExperimentConfig {
    /// Desk-scale defaults: p = 50, 200 replications, 30×30 grid.
    pub fn new(design: Design) -> Self {
        ExperimentConfig {
            design,
            p: 50,
            n: 200,
            alpha_tilde: 0.1,
            replications: 200,
            seed: 1,
            lambda_grid: GridSpec::default_range(),
            rho_grid: GridSpec::default_range(),
            admm: AdmmSettings::default(),
            alpha: 0.05,
            center: true,
            entries: vec![(1, 1), (1, 30)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(FglError::InvalidInput("replications must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(FglError::InsufficientData { n: self.n });
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(FglError::InvalidInput(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        PrecisionGenConfig {
            p: self.p,
            alpha_tilde: self.alpha_tilde,
            seed: self.seed,
        }
        .validate()?;
        self.lambda_grid.validate()?;
        self.rho_grid.validate()?;
        self.admm.validate()?;
        for &(i, j) in &self.entries {
            if i == 0 || j == 0 || i > self.p || j > self.p {
                return Err(FglError::InvalidInput(format!(
                    "entry ({i}, {j}) outside 1..={}",
                    self.p
                )));
            }
        }
        Ok(())
    }

    pub fn truth(&self) -> Result<GroundTruth> {
        self.design.build_truth(self.p, self.alpha_tilde, self.seed)
    }

    pub fn grid(&self) -> Vec<PenaltyParams> {
        penalty_grid(&self.lambda_grid, &self.rho_grid)
    }
}

/// Per-replication sample covariances for all groups of `truth`.
pub fn replicate_covariances(
    truth: &GroundTruth,
    n: usize,
    center: bool,
    master_seed: u64,
    replication: u64,
) -> Result<Vec<SymMatrix>> {
    let rep_seed = derive_seed(master_seed, STREAM_SAMPLE, replication);
    truth
        .sigma0
        .iter()
        .enumerate()
        .map(|(g, s0)| {
            let x = sample_with_covariance(s0, n, derive_seed(rep_seed, STREAM_SAMPLE, g as u64))?;
            sample_covariance(&x, center)
        })
        .collect()
}

/// One replication: sample, select `(λ, ρ)` by AIC, fit, de-bias.
struct Replicate {
    params: PenaltyParams,
    db: crate::inference::DebiasedFit,
}

fn run_replicate(cfg: &ExperimentConfig, truth: &GroundTruth, r: usize) -> Result<Replicate> {
    let sigmas = replicate_covariances(truth, cfg.n, cfg.center, cfg.seed, r as u64)?;
    let ns = vec![cfg.n; truth.k()];
    let sel = select_tuning_aic(&sigmas, &ns, &cfg.grid(), &cfg.admm)?;
    let db = debias(&sel.best_fit, &sigmas, &ns)?;
    Ok(Replicate {
        params: sel.best,
        db,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FluctuationResult {
    /// One-based entries, in request order.
    pub entries: Vec<(usize, usize)>,
    /// `z[r][e]` for replication `r` and entry `e`.
    pub z: Vec<Vec<f64>>,
    pub selected: Vec<PenaltyParams>,
}

impl FluctuationResult {
    pub fn samples_for(&self, entry: usize) -> Vec<f64> {
        self.z.iter().map(|row| row[entry]).collect()
    }
}

/// Monte-Carlo distribution of `√n (T − Θ_combination)/σ̂` at fixed entries.
pub fn run_fluctuation(cfg: &ExperimentConfig) -> Result<FluctuationResult> {
    cfg.validate()?;
    if cfg.entries.is_empty() {
        return Err(FglError::InvalidInput("fluctuation run needs at least one entry".into()));
    }
    let truth = cfg.truth()?;
    let coefs = cfg.design.coefficients();
    let rows: Vec<(Vec<f64>, PenaltyParams)> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let rep = run_replicate(cfg, &truth, r)?;
            let z = cfg
                .entries
                .iter()
                .map(|&(i, j)| {
                    let hyp = LinearHypothesis::new(coefs.clone(), i - 1, j - 1)?;
                    let null = hyp.combine(&truth.theta0);
                    Ok(test_linear(&rep.db, &hyp, null, cfg.alpha)?.z)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((z, rep.params))
        })
        .collect::<Result<_>>()?;
    let (z, selected) = rows.into_iter().unzip();
    Ok(FluctuationResult {
        entries: cfg.entries.clone(),
        z,
        selected,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EntryCoverage {
    /// One-based indices, `i <= j`.
    pub i: usize,
    pub j: usize,
    pub hits: usize,
    pub in_s: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    pub design: Design,
    pub replications: usize,
    pub avg_cov_s: f64,
    pub avg_cov_sc: f64,
    pub entries: Vec<EntryCoverage>,
    pub selected: Vec<PenaltyParams>,
}

impl CoverageReport {
    /// Empirical frequency `ϑ̂_ij` of each entry.
    pub fn frequencies(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| e.hits as f64 / self.replications as f64)
            .collect()
    }
}

/// Per-entry hit indicators of one replication, upper triangle row-major.
pub fn coverage_hits(
    db: &crate::inference::DebiasedFit,
    truth: &GroundTruth,
    coefficients: &[f64],
    alpha: f64,
) -> Result<Vec<bool>> {
    let p = truth.p();
    let mut hits = Vec::with_capacity(p * (p + 1) / 2);
    for i in 0..p {
        for j in i..p {
            let hyp = LinearHypothesis::new(coefficients.to_vec(), i, j)?;
            let truth_value = hyp.combine(&truth.theta0);
            let res = test_linear(db, &hyp, truth_value, alpha)?;
            hits.push(!res.reject);
        }
    }
    Ok(hits)
}

/// Average coverage of the `1 − alpha` intervals over the support `S` and its
/// complement, upper triangle including the diagonal.
pub fn run_coverage(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    let truth = cfg.truth()?;
    let coefs = cfg.design.coefficients();
    let p = cfg.p;
    let per_rep: Vec<(Vec<bool>, PenaltyParams)> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let rep = run_replicate(cfg, &truth, r)?;
            Ok((coverage_hits(&rep.db, &truth, &coefs, cfg.alpha)?, rep.params))
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::with_capacity(p * (p + 1) / 2);
    for i in 0..p {
        for j in i..p {
            entries.push(EntryCoverage {
                i: i + 1,
                j: j + 1,
                hits: 0,
                in_s: cfg.design.in_support(&truth, i, j),
            });
        }
    }
    for (hits, _) in &per_rep {
        for (e, &h) in entries.iter_mut().zip(hits) {
            e.hits += h as usize;
        }
    }
    let reps = cfg.replications as f64;
    let avg = |in_s: bool| {
        let sel: Vec<f64> = entries
            .iter()
            .filter(|e| e.in_s == in_s)
            .map(|e| e.hits as f64 / reps)
            .collect();
        if sel.is_empty() {
            f64::NAN
        } else {
            sel.iter().sum::<f64>() / sel.len() as f64
        }
    };
    Ok(CoverageReport {
        design: cfg.design,
        replications: cfg.replications,
        avg_cov_s: avg(true),
        avg_cov_sc: avg(false),
        entries,
        selected: per_rep.into_iter().map(|(_, s)| s).collect(),
    })
}

/// Fixed-rate tuning study: `λ = ρ = scale · √(log p / n)` instead of AIC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub design: Design,
    pub p: usize,
    pub alpha_tilde: f64,
    pub replications: usize,
    pub seed: u64,
    pub lambda_scale: f64,
    pub admm: AdmmSettings,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateSample {
    /// `Σ_k ‖Θ̂_k − Θ₀_k‖_F`
    pub estimation_error: f64,
    /// `√n ‖Σ_k a_k Υ_k‖_∞` for the design coefficients.
    pub scaled_remainder: f64,
    /// Largest `‖Θ̂_d − Θ₀ − Ξ − Υ‖_∞` over groups.
    pub identity_error: f64,
}

impl RateStudy {
    pub fn penalty(&self, n: usize) -> PenaltyParams {
        let level = self.lambda_scale * ((self.p as f64).ln() / n as f64).sqrt();
        PenaltyParams {
            lambda: level,
            rho: level,
            weighted: false,
        }
    }

    pub fn run(&self, n: usize) -> Result<Vec<RateSample>> {
        let truth = self.design.build_truth(self.p, self.alpha_tilde, self.seed)?;
        let params = self.penalty(n);
        let coefs = self.design.coefficients();
        (0..self.replications)
            .into_par_iter()
            .map(|r| {
                let sigmas = replicate_covariances(&truth, n, true, derive_seed(self.seed, STREAM_RATE, n as u64), r as u64)?;
                let fit = fit_fgl(&sigmas, &params, &self.admm)?;
                let ns = vec![n; truth.k()];
                let db = debias(&fit, &sigmas, &ns)?;
                let dec = decompose_debias_error(&db, &truth, &sigmas, &[coefs.clone()])?;
                let estimation_error = fit
                    .thetas
                    .iter()
                    .zip(&truth.theta0)
                    .map(|(a, b)| (a.as_matrix() - b.as_matrix()).norm())
                    .sum();
                Ok(RateSample {
                    estimation_error,
                    scaled_remainder: dec.rem_supnorm[0],
                    identity_error: dec.identity_error.iter().cloned().fold(0.0, f64::max),
                })
            })
            .collect()
    }
}

/// `sup_x |F_n(x) − Φ(x)|` against the standard normal.
pub fn ks_statistic_normal(samples: &[f64]) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = Normal::standard();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(idx, &x)| {
            let f = normal.cdf(x);
            let above = (idx as f64 + 1.0) / n - f;
            let below = f - idx as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov critical value `√(−ln(α/2)/2) / √n`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Equal-width bins on `[lower, upper)`; values outside are clamped into the
/// first or last bin.
pub fn histogram(samples: &[f64], lower: f64, upper: f64, bins: usize) -> Vec<HistogramBin> {
    let width = (upper - lower) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lower: lower + width * b as f64,
            upper: if b + 1 == bins { upper } else { lower + width * (b + 1) as f64 },
            count: 0,
        })
        .collect();
    for &x in samples {
        let b = ((x - lower) / width).floor();
        let b = if b.is_nan() { 0 } else { (b.max(0.0) as usize).min(bins - 1) };
        out[b].count += 1;
    }
    out
}

pub fn mean_sd(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}
