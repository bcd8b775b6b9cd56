use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{FglError, Result};
use crate::matrix::{sym_eigen, SymMatrix};

/// Inputs of the random sparse precision-matrix generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionGenConfig {
    pub p: usize,
    /// Probability that an off-diagonal pair carries an edge.
    pub alpha_tilde: f64,
    pub seed: u64,
}

impl PrecisionGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(FglError::InvalidInput(format!("p must be at least 2, got {}", self.p)));
        }
        if !(0.0..=1.0).contains(&self.alpha_tilde) {
            return Err(FglError::InvalidInput(format!(
                "alpha_tilde must lie in [0, 1], got {}",
                self.alpha_tilde
            )));
        }
        Ok(())
    }
}

/// Known population parameters for a simulated `K`-group design.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub theta0: Vec<SymMatrix>,
    pub sigma0: Vec<SymMatrix>,
    /// Nonzero strictly-upper entries `(i, j)`, `i < j`, per group.
    pub supports: Vec<Vec<(usize, usize)>>,
    pub sparsity: Vec<usize>,
    /// Largest number of nonzero off-diagonal entries in any column, over
    /// all groups.
    pub max_degree: usize,
}

impl GroundTruth {
    pub fn from_thetas(theta0: Vec<SymMatrix>) -> Result<Self> {
        let sigma0 = theta0
            .iter()
            .map(|t| t.inverse_pd())
            .collect::<Result<Vec<_>>>()?;
        let supports: Vec<Vec<(usize, usize)>> = theta0.iter().map(support_of).collect();
        let sparsity = supports.iter().map(|s| s.len()).collect();
        let max_degree = theta0
            .iter()
            .map(|t| {
                let p = t.dim();
                (0..p)
                    .map(|j| (0..p).filter(|&i| i != j && t.get(i, j) != 0.0).count())
                    .max()
                    .unwrap_or(0)
            })
            .max()
            .unwrap_or(0);
        Ok(GroundTruth {
            theta0,
            sigma0,
            supports,
            sparsity,
            max_degree,
        })
    }

    pub fn k(&self) -> usize {
        self.theta0.len()
    }

    pub fn p(&self) -> usize {
        self.theta0[0].dim()
    }
}

pub fn support_of(m: &SymMatrix) -> Vec<(usize, usize)> {
    let p = m.dim();
    let mut out = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            if m.get(i, j) != 0.0 {
                out.push((i, j));
            }
        }
    }
    out
}

/// Off-diagonal part before the diagonal shift, with the support it was drawn
/// with.
pub(crate) fn draw_offdiagonal(cfg: &PrecisionGenConfig) -> (DMatrix<f64>, Vec<(usize, usize)>) {
    let p = cfg.p;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut m = DMatrix::zeros(p, p);
    let mut support = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            let edge = rng.random_bool(cfg.alpha_tilde);
            let u_ij: f64 = rng.random();
            let u_ji: f64 = rng.random();
            let avg = if edge { 0.5 * (u_ij + u_ji) } else { 0.0 };
            // absent edges stay at zero
            let v = if avg > 0.0 && avg < 0.5 { avg - 1.0 } else { avg };
            if v != 0.0 {
                m[(i, j)] = v;
                m[(j, i)] = v;
                support.push((i, j));
            }
        }
    }
    (m, support)
}

/// Draws one sparse precision matrix: random symmetric off-diagonal entries
/// with magnitudes in `[0.5, 1)`, shifted by `|λ_min| + 0.1` on the diagonal.
pub fn generate_precision(cfg: &PrecisionGenConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let (offdiag, _) = draw_offdiagonal(cfg);
    let tilde = SymMatrix::from_upper(offdiag)?;
    let lambda_min = sym_eigen(&tilde)?.min_eigenvalue();
    let shift = lambda_min.abs() + 0.1;
    let mut theta = tilde.into_inner();
    for i in 0..cfg.p {
        theta[(i, i)] += shift;
    }
    GroundTruth::from_thetas(vec![SymMatrix::from_upper(theta)?])
}

/// `n` draws from `N(0, Θ₀⁻¹)`, one per row, via the Cholesky factor of the
/// covariance.
pub fn sample_gaussian(theta0: &SymMatrix, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let sigma0 = theta0.inverse_pd()?;
    sample_with_covariance(&sigma0, n, seed)
}

pub fn sample_with_covariance(sigma0: &SymMatrix, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(sigma0.as_matrix().clone()).ok_or(FglError::NotPositiveDefinite)?;
    let l = chol.l();
    let p = sigma0.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = DMatrix::zeros(n, p);
    for r in 0..n {
        for c in 0..p {
            z[(r, c)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(z * l.transpose())
}

/// Splitmix64 finalizer over `(master, stream, index)`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut x = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
