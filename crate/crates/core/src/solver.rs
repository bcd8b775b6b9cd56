//! ADMM solver for the K-group fused graphical lasso.
//!
//! The consensus splitting alternates a likelihood step on `Θ_k` (closed form
//! through one eigendecomposition per group), an entrywise fused-lasso prox
//! on `Z_k`, and a scaled dual update `U_k += Θ_k − Z_k`. The reported
//! estimate is the `Z` iterate, which carries an exact zero pattern.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FglError, Result};
use crate::matrix::{correlation_summary, sym_eigen, SymMatrix};
use crate::penalty::{prox_entries, subgradient_residuals, PenaltyParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmSettings {
    /// Augmented-Lagrangian penalty.
    pub eta: f64,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_iter: usize,
    /// Multiply both tolerances by `p`.
    pub relative: bool,
    /// Optional per-group multipliers on the likelihood terms (e.g. `n_k`).
    #[serde(default)]
    pub loss_weights: Option<Vec<f64>>,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        AdmmSettings {
            eta: 1.0,
            tol_primal: 1e-5,
            tol_dual: 1e-5,
            max_iter: 500,
            relative: false,
            loss_weights: None,
        }
    }
}

impl AdmmSettings {
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol_primal = tol;
        self.tol_dual = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(FglError::InvalidInput(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return Err(FglError::InvalidInput("tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(FglError::InvalidInput("max_iter must be at least 1".into()));
        }
        if let Some(w) = &self.loss_weights {
            if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(FglError::InvalidInput("loss weights must be positive".into()));
            }
        }
        Ok(())
    }

    fn weights(&self, k: usize) -> Result<Vec<f64>> {
        match &self.loss_weights {
            None => Ok(vec![1.0; k]),
            Some(w) if w.len() == k => Ok(w.clone()),
            Some(w) => Err(FglError::InvalidInput(format!(
                "{} loss weights for {k} groups",
                w.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Covariance,
    Correlation,
}

#[derive(Debug, Clone)]
pub struct FglFit {
    pub thetas: Vec<SymMatrix>,
    pub params: PenaltyParams,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Penalized objective evaluated at the `Θ` iterate, one value per
    /// iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub scale: Scale,
    pub loss_weights: Vec<f64>,
}

impl FglFit {
    pub fn k(&self) -> usize {
        self.thetas.len()
    }

    pub fn p(&self) -> usize {
        self.thetas[0].dim()
    }
}

/// Penalized negative log-likelihood
/// `Σ_k w_k [tr(Σ_k Θ_k) − log det Θ_k] + λ Σ_k ‖Θ_k⁻‖₁ + ρ Σ_{k<k'} ‖(Θ_k − Θ_k')⁻‖₁`.
pub fn fgl_objective(
    sigmas: &[SymMatrix],
    thetas: &[SymMatrix],
    params: &PenaltyParams,
    loss_weights: &[f64],
) -> Result<f64> {
    let mut f = 0.0;
    for ((s, t), w) in sigmas.iter().zip(thetas).zip(loss_weights) {
        f += w * (trace_product(s.as_matrix(), t.as_matrix()) - crate::matrix::log_det_pd(t)?);
    }
    let mats: Vec<&DMatrix<f64>> = thetas.iter().map(|t| t.as_matrix()).collect();
    f += penalty_value(&mats, params);
    Ok(f)
}

/// `tr(A B)` for symmetric `A`, `B`.
pub(crate) fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn penalty_value(mats: &[&DMatrix<f64>], params: &PenaltyParams) -> f64 {
    let p = mats[0].nrows();
    let k = mats.len();
    let mut l1 = 0.0;
    let mut fused = 0.0;
    for j in 0..p {
        for i in 0..j {
            for a in 0..k {
                let va = mats[a][(i, j)];
                l1 += va.abs();
                for b in a + 1..k {
                    fused += (va - mats[b][(i, j)]).abs();
                }
            }
        }
    }
    // off-diagonal sums count both (i,j) and (j,i)
    2.0 * (params.lambda * l1 + params.rho * fused)
}

fn validate_sigmas(sigmas: &[SymMatrix]) -> Result<usize> {
    if sigmas.is_empty() {
        return Err(FglError::InvalidInput("need at least one group".into()));
    }
    let p = sigmas[0].dim();
    for (k, s) in sigmas.iter().enumerate() {
        if s.dim() != p {
            return Err(FglError::InvalidInput(format!(
                "group {k} has dimension {}, expected {p}",
                s.dim()
            )));
        }
        if !s.is_finite() {
            return Err(FglError::InvalidInput(format!("group {k} has non-finite entries")));
        }
        if let Some(i) = (0..p).find(|&i| !(s.get(i, i) > 0.0)) {
            return Err(FglError::DegenerateVariance(format!(
                "group {k} has non-positive variance at index {i}"
            )));
        }
        let eig = sym_eigen(s)?;
        let trace: f64 = s.diagonal().iter().sum();
        if eig.min_eigenvalue() < -1e-10 * trace {
            return Err(FglError::NotPositiveSemiDefinite {
                min_eigenvalue: eig.min_eigenvalue(),
            });
        }
    }
    Ok(p)
}

/// Fits the fused graphical lasso on `K` covariance matrices.
pub fn fit_fgl(sigmas: &[SymMatrix], params: &PenaltyParams, settings: &AdmmSettings) -> Result<FglFit> {
    params.validate()?;
    settings.validate()?;
    let p = validate_sigmas(sigmas)?;
    let k = sigmas.len();
    let weights = settings.weights(k)?;
    let eta = settings.eta;
    let scale = if settings.relative { p as f64 } else { 1.0 };

    let mut z = vec![DMatrix::<f64>::zeros(p, p); k];
    let mut u = vec![DMatrix::<f64>::zeros(p, p); k];
    let mut theta = vec![DMatrix::<f64>::zeros(p, p); k];
    let mut z_next = vec![DMatrix::<f64>::zeros(p, p); k];
    let mut prox_in = vec![DMatrix::<f64>::zeros(p, p); k];
    let mut logdets = vec![0.0; k];

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;

    for iter in 1..=settings.max_iter {
        iterations = iter;
        for g in 0..k {
            let target = (&z[g] - &u[g]) * eta - sigmas[g].as_matrix() * weights[g];
            let target = SymMatrix::from_upper(target)?;
            let eig = sym_eigen(&target)?;
            let w = weights[g];
            let map = |d: f64| (d + (d * d + 4.0 * eta * w).sqrt()) / (2.0 * eta);
            logdets[g] = eig.eigenvalues.iter().map(|&d| map(d).ln()).sum();
            theta[g] = eig.reconstruct_with(map).into_inner();
            prox_in[g] = &theta[g] + &u[g];
        }
        prox_entries(&prox_in, eta, params, &mut z_next);

        primal = 0.0_f64;
        dual = 0.0_f64;
        for g in 0..k {
            let diff = &theta[g] - &z_next[g];
            primal = primal.max(diff.norm());
            dual = dual.max(eta * (&z_next[g] - &z[g]).norm());
            u[g] += &diff;
        }
        std::mem::swap(&mut z, &mut z_next);

        let mut obj = 0.0;
        for g in 0..k {
            obj += weights[g] * (trace_product(sigmas[g].as_matrix(), &theta[g]) - logdets[g]);
        }
        let refs: Vec<&DMatrix<f64>> = theta.iter().collect();
        obj += penalty_value(&refs, params);
        trace.push(obj);

        if primal <= settings.tol_primal * scale && dual <= settings.tol_dual * scale {
            converged = true;
            break;
        }
    }

    let mut thetas = Vec::with_capacity(k);
    let z_is_pd = z.iter().all(|m| {
        SymMatrix::from_upper(m.clone())
            .map(|s| s.is_positive_definite())
            .unwrap_or(false)
    });
    if z_is_pd {
        for m in z {
            thetas.push(SymMatrix::from_upper(m)?);
        }
    } else {
        // only reachable far from convergence; the Θ iterate is always PD
        converged = false;
        for m in theta {
            thetas.push(SymMatrix::from_upper(m)?);
        }
    }

    Ok(FglFit {
        thetas,
        params: *params,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        objective_trace: trace,
        converged,
        scale: Scale::Covariance,
        loss_weights: weights,
    })
}

/// Result of the correlation-scale (weighted) fit.
#[derive(Debug, Clone)]
pub struct WeightedFit {
    /// Estimates on the correlation scale.
    pub fit_r: FglFit,
    /// `Ŵ_k⁻¹ Θ̂_R Ŵ_k⁻¹`, the estimates on the original scale.
    pub thetas_w: Vec<SymMatrix>,
    /// Diagonal entries of `Ŵ_k`.
    pub scales: Vec<Vec<f64>>,
}

pub fn fit_fgl_weighted(
    sigmas: &[SymMatrix],
    params: &PenaltyParams,
    settings: &AdmmSettings,
) -> Result<WeightedFit> {
    let summaries = sigmas
        .iter()
        .map(correlation_summary)
        .collect::<Result<Vec<_>>>()?;
    let rs: Vec<SymMatrix> = summaries.iter().map(|c| c.r.clone()).collect();
    let mut fit_r = fit_fgl(&rs, &PenaltyParams { weighted: true, ..*params }, settings)?;
    fit_r.scale = Scale::Correlation;
    let scales: Vec<Vec<f64>> = summaries.iter().map(|c| c.scales()).collect();
    let thetas_w = fit_r
        .thetas
        .iter()
        .zip(&scales)
        .map(|(t, w)| unscale(t, w))
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightedFit {
        fit_r,
        thetas_w,
        scales,
    })
}

/// `W⁻¹ Θ W⁻¹` for diagonal `W = diag(w)`.
pub fn unscale(theta: &SymMatrix, w: &[f64]) -> Result<SymMatrix> {
    let p = theta.dim();
    let m = DMatrix::from_fn(p, p, |i, j| theta.get(i, j) / (w[i] * w[j]));
    SymMatrix::from_upper(m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    /// Per-group sup-norm of the stationarity residual at the best
    /// subgradient.
    pub stationarity: Vec<f64>,
    /// Largest `|Σ̂ − Θ̂⁻¹|` over zero off-diagonal entries beyond the
    /// admissible bound `λ + (K−1)ρ`; zero when dual feasible.
    pub dual_excess: f64,
    /// Entries whose residual exceeds [`KKT_VIOLATION_TOL`].
    pub violations: usize,
}

pub const KKT_VIOLATION_TOL: f64 = 1e-4;

impl KktReport {
    pub fn max_stationarity(&self) -> f64 {
        self.stationarity.iter().fold(0.0_f64, |a, b| a.max(*b))
    }
}

/// Checks the optimality conditions
/// `w_k (Σ̂_k − Θ̂_k⁻¹) + λ g_k + ρ Σ_{k'≠k} h_{kk'} = 0` entrywise, with
/// zero penalty on the diagonal.
pub fn kkt_check(fit: &FglFit, sigmas: &[SymMatrix], params: &PenaltyParams) -> Result<KktReport> {
    let k = fit.k();
    if sigmas.len() != k {
        return Err(FglError::InvalidInput(format!(
            "{} covariance matrices for {k} groups",
            sigmas.len()
        )));
    }
    let p = fit.p();
    if sigmas.iter().any(|s| s.dim() != p) {
        return Err(FglError::InvalidInput("dimension mismatch".into()));
    }
    let grads: Vec<DMatrix<f64>> = fit
        .thetas
        .iter()
        .zip(sigmas)
        .zip(&fit.loss_weights)
        .map(|((t, s), w)| Ok((s.as_matrix() - t.inverse_pd()?.as_matrix()) * *w))
        .collect::<Result<_>>()?;

    let mut stationarity = vec![0.0_f64; k];
    let mut dual_excess = 0.0_f64;
    let mut violations = 0;
    let bound = params.lambda + (k as f64 - 1.0) * params.rho;
    let mut grad = vec![0.0; k];
    let mut z = vec![0.0; k];
    for j in 0..p {
        for i in 0..=j {
            for g in 0..k {
                grad[g] = grads[g][(i, j)];
                z[g] = fit.thetas[g].get(i, j);
            }
            let res = if i == j {
                grad.clone()
            } else {
                for g in 0..k {
                    if z[g] == 0.0 {
                        dual_excess = dual_excess.max(grad[g].abs() - bound);
                    }
                }
                subgradient_residuals(&grad, &z, params.lambda, params.rho)
            };
            for g in 0..k {
                let r = res[g].abs();
                stationarity[g] = stationarity[g].max(r);
                if r > KKT_VIOLATION_TOL {
                    violations += 1;
                }
            }
        }
    }
    Ok(KktReport {
        stationarity,
        dual_excess: dual_excess.max(0.0),
        violations,
    })
}
