//! De-biased estimators and normal-theory tests for linear combinations of
//! precision-matrix entries across groups.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{FglError, Result};
use crate::matrix::SymMatrix;
use crate::solver::FglFit;

/// `Θ̂_d = 2Θ̂ − Θ̂ Σ̂ Θ̂` per group, plus the penalized estimates it was built
/// from (these feed the variance estimate).
#[derive(Debug, Clone)]
pub struct DebiasedFit {
    pub thetas_d: Vec<SymMatrix>,
    pub thetas: Vec<SymMatrix>,
    pub ns: Vec<usize>,
}

impl DebiasedFit {
    pub fn k(&self) -> usize {
        self.thetas_d.len()
    }

    pub fn p(&self) -> usize {
        self.thetas_d[0].dim()
    }

    /// Common per-group sample size.
    pub fn common_n(&self) -> Result<usize> {
        let n = self.ns[0];
        if self.ns.iter().any(|&m| m != n) {
            return Err(FglError::UnsupportedDesign(format!(
                "tests require equal group sample sizes, got {:?}",
                self.ns
            )));
        }
        Ok(n)
    }
}

/// De-biases penalized estimates `thetas` against the covariances `sigmas`.
pub fn debias_thetas(thetas: &[SymMatrix], sigmas: &[SymMatrix], ns: &[usize]) -> Result<DebiasedFit> {
    if thetas.is_empty() || thetas.len() != sigmas.len() || ns.len() != thetas.len() {
        return Err(FglError::InvalidInput(format!(
            "need matching group counts: {} estimates, {} covariances, {} sample sizes",
            thetas.len(),
            sigmas.len(),
            ns.len()
        )));
    }
    let p = thetas[0].dim();
    if thetas.iter().chain(sigmas).any(|m| m.dim() != p) {
        return Err(FglError::InvalidInput("dimension mismatch".into()));
    }
    let thetas_d = thetas
        .iter()
        .zip(sigmas)
        .map(|(t, s)| {
            let t = t.as_matrix();
            let m = t * 2.0 - t * s.as_matrix() * t;
            SymMatrix::symmetrize(&m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DebiasedFit {
        thetas_d,
        thetas: thetas.to_vec(),
        ns: ns.to_vec(),
    })
}

pub fn debias(fit: &FglFit, sigmas: &[SymMatrix], ns: &[usize]) -> Result<DebiasedFit> {
    debias_thetas(&fit.thetas, sigmas, ns)
}

/// `H₀: Σ_k a_k Θ^{[k]}_{ij} = null_value` for a zero-based entry `(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHypothesis {
    pub coefficients: Vec<f64>,
    pub i: usize,
    pub j: usize,
}

impl LinearHypothesis {
    pub fn new(coefficients: Vec<f64>, i: usize, j: usize) -> Result<Self> {
        if coefficients.iter().all(|a| *a == 0.0) || coefficients.iter().any(|a| !a.is_finite()) {
            return Err(FglError::InvalidInput(
                "coefficients must be finite and not all zero".into(),
            ));
        }
        Ok(LinearHypothesis { coefficients, i, j })
    }

    /// `a = (1, −1)`.
    pub fn equal(i: usize, j: usize) -> Self {
        LinearHypothesis {
            coefficients: vec![1.0, -1.0],
            i,
            j,
        }
    }

    /// `Σ_k a_k m_k[i, j]`.
    pub fn combine(&self, mats: &[SymMatrix]) -> f64 {
        self.coefficients
            .iter()
            .zip(mats)
            .map(|(a, m)| a * m.get(self.i, self.j))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub i: usize,
    pub j: usize,
    pub coefficients: Vec<f64>,
    pub statistic: f64,
    /// Estimated asymptotic standard deviation of `√n T`.
    pub sigma_hat: f64,
    pub z: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub reject: bool,
}

/// Upper `alpha/2` standard normal quantile.
pub fn normal_critical_value(alpha: f64) -> f64 {
    standard_normal().inverse_cdf(1.0 - alpha / 2.0)
}

/// `2 (1 − Φ(|z|))`, computed from the upper tail.
pub fn two_sided_p_value(z: f64) -> f64 {
    (2.0 * standard_normal().sf(z.abs())).clamp(0.0, 1.0)
}

fn standard_normal() -> Normal {
    Normal::standard()
}

pub fn test_linear(
    db: &DebiasedFit,
    hyp: &LinearHypothesis,
    null_value: f64,
    alpha: f64,
) -> Result<TestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FglError::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if hyp.coefficients.len() != db.k() {
        return Err(FglError::InvalidInput(format!(
            "{} coefficients for {} groups",
            hyp.coefficients.len(),
            db.k()
        )));
    }
    let p = db.p();
    if hyp.i >= p || hyp.j >= p {
        return Err(FglError::InvalidInput(format!(
            "entry ({}, {}) outside a {p}x{p} matrix",
            hyp.i, hyp.j
        )));
    }
    let n = db.common_n()? as f64;
    let statistic = hyp.combine(&db.thetas_d);
    let variance: f64 = hyp
        .coefficients
        .iter()
        .zip(&db.thetas)
        .map(|(a, t)| {
            let (i, j) = (hyp.i, hyp.j);
            a * a * (t.get(i, i) * t.get(j, j) + t.get(i, j) * t.get(i, j))
        })
        .sum();
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(FglError::DegenerateVariance(format!(
            "estimated variance {variance} at ({}, {})",
            hyp.i, hyp.j
        )));
    }
    let sigma_hat = variance.sqrt();
    let root_n = n.sqrt();
    let z = root_n * (statistic - null_value) / sigma_hat;
    let crit = normal_critical_value(alpha);
    let half = crit * sigma_hat / root_n;
    Ok(TestResult {
        i: hyp.i,
        j: hyp.j,
        coefficients: hyp.coefficients.clone(),
        statistic,
        sigma_hat,
        z,
        p_value: two_sided_p_value(z),
        ci_low: statistic - half,
        ci_high: statistic + half,
        reject: z.abs() > crit,
    })
}

/// Two-sample equality test, `a = (1, −1)` against zero.
pub fn test_equal(db: &DebiasedFit, i: usize, j: usize, alpha: f64) -> Result<TestResult> {
    if db.k() != 2 {
        return Err(FglError::InvalidInput(format!(
            "equality test needs exactly 2 groups, got {}",
            db.k()
        )));
    }
    test_linear(db, &LinearHypothesis::equal(i, j), 0.0, alpha)
}

/// Runs `test_linear` on every upper-triangular entry `(i <= j)`.
pub fn test_all_entries(
    db: &DebiasedFit,
    coefficients: &[f64],
    null_value: f64,
    alpha: f64,
) -> Result<Vec<TestResult>> {
    let p = db.p();
    let mut out = Vec::with_capacity(p * (p + 1) / 2);
    for i in 0..p {
        for j in i..p {
            let hyp = LinearHypothesis::new(coefficients.to_vec(), i, j)?;
            out.push(test_linear(db, &hyp, null_value, alpha)?);
        }
    }
    Ok(out)
}
