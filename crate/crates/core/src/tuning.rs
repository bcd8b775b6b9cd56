//! AIC-based selection of `(lambda, rho)` over a grid.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FglError, Result};
use crate::matrix::{log_det_pd, SymMatrix};
use crate::penalty::PenaltyParams;
use crate::solver::{fit_fgl, trace_product, AdmmSettings, FglFit};

/// Evenly spaced values `start, …, stop` with `count` points, written
/// `start:stop:count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn new(start: f64, stop: f64, count: usize) -> Result<Self> {
        let spec = GridSpec { start, stop, count };
        spec.validate()?;
        Ok(spec)
    }

    /// 0.05 to 0.3 in 30 points, step (0.3 − 0.05)/29 ≈ 0.0086.
    pub fn default_range() -> Self {
        GridSpec {
            start: 0.05,
            stop: 0.3,
            count: 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(FglError::InvalidInput("grid needs at least one point".into()));
        }
        if !(self.start >= 0.0 && self.stop >= self.start && self.stop.is_finite()) {
            return Err(FglError::InvalidInput(format!(
                "grid bounds must satisfy 0 <= start <= stop, got {}:{}",
                self.start, self.stop
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        if self.count > 1 {
            (self.stop - self.start) / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = self.step();
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.stop
                } else {
                    self.start + step * i as f64
                }
            })
            .collect()
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.count)
    }
}

impl FromStr for GridSpec {
    type Err = FglError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || FglError::InvalidInput(format!("grid spec must be start:stop:count, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let start = parts[0].trim().parse().map_err(|_| bad())?;
        let stop = parts[1].trim().parse().map_err(|_| bad())?;
        let count = parts[2].trim().parse().map_err(|_| bad())?;
        GridSpec::new(start, stop, count)
    }
}

/// Cartesian product of a lambda grid and a rho grid, lambda-major.
pub fn penalty_grid(lambdas: &GridSpec, rhos: &GridSpec) -> Vec<PenaltyParams> {
    let rho_values = rhos.values();
    lambdas
        .values()
        .into_iter()
        .flat_map(|lambda| {
            rho_values.iter().map(move |&rho| PenaltyParams {
                lambda,
                rho,
                weighted: false,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AicRow {
    pub lambda: f64,
    pub rho: f64,
    pub aic: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct TuningSelection {
    pub best: PenaltyParams,
    pub best_fit: FglFit,
    /// One row per grid point, in grid order.
    pub table: Vec<AicRow>,
}

/// `Σ_k [ n_k tr(Σ̂_k Θ̂_k) − n_k log det Θ̂_k + 2 E_k ]` where `E_k` counts
/// nonzero entries strictly above the diagonal of `Θ̂_k`.
pub fn aic_score(sigmas: &[SymMatrix], thetas: &[SymMatrix], ns: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for ((s, t), &n) in sigmas.iter().zip(thetas).zip(ns) {
        let n = n as f64;
        total += n * trace_product(s.as_matrix(), t.as_matrix()) - n * log_det_pd(t)?
            + 2.0 * t.upper_nonzeros() as f64;
    }
    Ok(total)
}

pub fn select_tuning_aic(
    sigmas: &[SymMatrix],
    ns: &[usize],
    grid: &[PenaltyParams],
    settings: &AdmmSettings,
) -> Result<TuningSelection> {
    if grid.is_empty() {
        return Err(FglError::InvalidInput("tuning grid is empty".into()));
    }
    if ns.len() != sigmas.len() {
        return Err(FglError::InvalidInput(format!(
            "{} sample sizes for {} groups",
            ns.len(),
            sigmas.len()
        )));
    }
    if ns.iter().any(|&n| n == 0) {
        return Err(FglError::InvalidInput("sample sizes must be positive".into()));
    }
    let fits: Vec<(FglFit, f64)> = grid
        .par_iter()
        .map(|params| {
            let fit = fit_fgl(sigmas, params, settings)?;
            let aic = aic_score(sigmas, &fit.thetas, ns)?;
            Ok((fit, aic))
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (idx, (_, aic)) in fits.iter().enumerate().skip(1) {
        let (cur, cur_aic) = (&grid[best], fits[best].1);
        let cand = &grid[idx];
        let better = *aic < cur_aic
            || (*aic == cur_aic
                && (cand.lambda > cur.lambda || (cand.lambda == cur.lambda && cand.rho > cur.rho)));
        if better {
            best = idx;
        }
    }
    let table = grid
        .iter()
        .zip(&fits)
        .map(|(g, (fit, aic))| AicRow {
            lambda: g.lambda,
            rho: g.rho,
            aic: *aic,
            converged: fit.converged,
        })
        .collect();
    let best_fit = fits.into_iter().nth(best).map(|(f, _)| f).expect("index in range");
    Ok(TuningSelection {
        best: grid[best],
        best_fit,
        table,
    })
}
