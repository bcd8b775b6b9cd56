//! Proximal operators for the fused lasso penalty
//!
//! For one off-diagonal entry shared by `K` groups the penalty is
//! `λ Σ_k |z_k| + ρ Σ_{k<k'} |z_k − z_{k'}|`. Its prox is computed in two
//! exact stages: the all-pairs fusion prox first, then entrywise
//! soft-thresholding by `λ/η`. Soft-thresholding is monotone and never flips
//! the sign of a pairwise difference, so the fusion subgradients stay valid
//! and the composition is the prox of the sum.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FglError, Result};
use crate::matrix::SymMatrix;

/// Sparsity weight `lambda` and fusion weight `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub lambda: f64,
    pub rho: f64,
    /// Solve on the correlation scale and map back through the diagonal
    /// scales (the weighted penalty).
    #[serde(default)]
    pub weighted: bool,
}

impl PenaltyParams {
    pub fn new(lambda: f64, rho: f64) -> Result<Self> {
        let p = PenaltyParams {
            lambda,
            rho,
            weighted: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn weighted(lambda: f64, rho: f64) -> Result<Self> {
        Ok(PenaltyParams {
            weighted: true,
            ..Self::new(lambda, rho)?
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(FglError::InvalidInput(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(FglError::InvalidInput(format!(
                "rho must be finite and non-negative, got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// One scalar prox problem:
/// `argmin_z Σ_k (eta/2)(z_k − a_k)² + λ Σ_k |z_k| + ρ Σ_{k<k'} |z_k − z_{k'}|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxProblem {
    pub targets: Vec<f64>,
    pub eta: f64,
    pub lambda: f64,
    pub rho: f64,
    /// Diagonal entries carry no penalty.
    pub is_diagonal: bool,
}

impl ProxProblem {
    /// Value of the prox objective at `z`.
    pub fn objective(&self, z: &[f64]) -> f64 {
        let mut f = 0.0;
        for (zk, ak) in z.iter().zip(&self.targets) {
            f += 0.5 * self.eta * (zk - ak) * (zk - ak);
        }
        if !self.is_diagonal {
            for (k, zk) in z.iter().enumerate() {
                f += self.lambda * zk.abs();
                for zl in &z[k + 1..] {
                    f += self.rho * (zk - zl).abs();
                }
            }
        }
        f
    }
}

pub fn prox_fused_lasso(problem: &ProxProblem) -> Result<Vec<f64>> {
    if problem.targets.is_empty() {
        return Err(FglError::InvalidInput("prox problem needs K >= 1".into()));
    }
    if !(problem.eta > 0.0 && problem.eta.is_finite()) {
        return Err(FglError::InvalidInput(format!(
            "eta must be positive, got {}",
            problem.eta
        )));
    }
    PenaltyParams::new(problem.lambda, problem.rho)?;
    if problem.targets.iter().any(|a| !a.is_finite()) {
        return Err(FglError::InvalidInput("prox targets must be finite".into()));
    }
    let mut out = problem.targets.clone();
    if !problem.is_diagonal {
        let mut scratch = ProxScratch::default();
        fused_prox_in_place(
            &mut out,
            problem.lambda / problem.eta,
            problem.rho / problem.eta,
            &mut scratch,
        );
    }
    Ok(out)
}

/// Reusable buffers for the `K >= 3` path.
#[derive(Debug, Default)]
pub(crate) struct ProxScratch {
    order: Vec<usize>,
    shifted: Vec<f64>,
    block_sum: Vec<f64>,
    block_len: Vec<usize>,
}

#[inline]
pub(crate) fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// In place prox with shrinkage `shrink = λ/η` and fusion `fuse = ρ/η`.
pub(crate) fn fused_prox_in_place(z: &mut [f64], shrink: f64, fuse: f64, scratch: &mut ProxScratch) {
    match z.len() {
        0 | 1 => {}
        2 => {
            let (a, b) = (z[0], z[1]);
            if (a - b).abs() <= 2.0 * fuse {
                let mid = 0.5 * (a + b);
                z[0] = mid;
                z[1] = mid;
            } else if a > b {
                z[0] = a - fuse;
                z[1] = b + fuse;
            } else {
                z[0] = a + fuse;
                z[1] = b - fuse;
            }
        }
        _ if fuse > 0.0 => clique_fusion(z, fuse, scratch),
        _ => {}
    }
    if shrink > 0.0 {
        for v in z.iter_mut() {
            *v = soft_threshold(*v, shrink);
        }
    }
}

/// All-pairs fusion prox for `K >= 3`.
///
/// The minimizer preserves the order of the targets. On order-preserving
/// points the penalty is linear, `Σ_r (2r − K + 1) z_(r)` over ranks `r`, so
/// the prox is the isotonic regression of the rank-shifted targets.
fn clique_fusion(z: &mut [f64], fuse: f64, scratch: &mut ProxScratch) {
    let k = z.len();
    let ProxScratch {
        order,
        shifted,
        block_sum,
        block_len,
    } = scratch;
    order.clear();
    order.extend(0..k);
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]));
    shifted.clear();
    shifted.extend(
        order
            .iter()
            .enumerate()
            .map(|(r, &idx)| z[idx] - fuse * (2.0 * r as f64 - (k as f64 - 1.0))),
    );

    // pool adjacent violators
    block_sum.clear();
    block_len.clear();
    for &y in shifted.iter() {
        block_sum.push(y);
        block_len.push(1);
        while block_sum.len() > 1 {
            let last = block_sum.len() - 1;
            let mean_last = block_sum[last] / block_len[last] as f64;
            let mean_prev = block_sum[last - 1] / block_len[last - 1] as f64;
            if mean_prev < mean_last {
                break;
            }
            block_sum[last - 1] += block_sum[last];
            block_len[last - 1] += block_len[last];
            block_sum.pop();
            block_len.pop();
        }
    }
    let mut r = 0;
    for (sum, &len) in block_sum.iter().zip(block_len.iter()) {
        let mean = sum / len as f64;
        for _ in 0..len {
            z[order[r]] = mean;
            r += 1;
        }
    }
}

/// Smallest achievable sup-norm of `grad + λ g + ρ Σ_{k'≠k} h_{kk'}` over
/// subgradients `g_k ∈ ∂|z_k|` and `h_{kk'} ∈ ∂|z_k − z_{k'}|`.
///
/// Coordinates fixed by the signs of `z` stay fixed; the free ones (exact
/// zeros and exact ties) are chosen by coordinate descent on the squared
/// residual with box constraints `[-1, 1]`.
pub fn subgradient_residual(grad: &[f64], z: &[f64], lambda: f64, rho: f64) -> f64 {
    subgradient_residuals(grad, z, lambda, rho)
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Per-coordinate residuals at the best subgradient found by
/// [`subgradient_residual`].
pub fn subgradient_residuals(grad: &[f64], z: &[f64], lambda: f64, rho: f64) -> Vec<f64> {
    let k = z.len();
    let mut r = grad.to_vec();
    let mut free_g = Vec::new();
    let mut g = vec![0.0; k];
    for a in 0..k {
        if z[a] == 0.0 {
            free_g.push(a);
        } else {
            r[a] += lambda * z[a].signum();
        }
    }
    let mut free_h = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            if z[a] == z[b] {
                free_h.push((a, b, 0.0_f64));
            } else {
                let s = (z[a] - z[b]).signum();
                r[a] += rho * s;
                r[b] -= rho * s;
            }
        }
    }
    if lambda == 0.0 {
        free_g.clear();
    }
    if rho == 0.0 {
        free_h.clear();
    }
    for _ in 0..10_000 {
        let mut moved = 0.0_f64;
        for &a in &free_g {
            let target = (g[a] - r[a] / lambda).clamp(-1.0, 1.0);
            let delta = target - g[a];
            if delta != 0.0 {
                g[a] = target;
                r[a] += lambda * delta;
                moved = moved.max((lambda * delta).abs());
            }
        }
        for (a, b, h) in free_h.iter_mut() {
            let target = (*h - (r[*a] - r[*b]) / (2.0 * rho)).clamp(-1.0, 1.0);
            let delta = target - *h;
            if delta != 0.0 {
                *h = target;
                r[*a] += rho * delta;
                r[*b] -= rho * delta;
                moved = moved.max((rho * delta).abs());
            }
        }
        if moved <= 1e-15 {
            break;
        }
    }
    r
}

/// Applies the scalar prox to every entry-tuple `(A_1[i,j], …, A_K[i,j])`
/// over the upper triangle; diagonal entries pass through untouched.
pub(crate) fn prox_entries(
    inputs: &[DMatrix<f64>],
    eta: f64,
    params: &PenaltyParams,
    outputs: &mut [DMatrix<f64>],
) {
    let k = inputs.len();
    let p = inputs[0].nrows();
    let shrink = params.lambda / eta;
    let fuse = params.rho / eta;
    let mut scratch = ProxScratch::default();
    let mut buf = vec![0.0; k];
    for j in 0..p {
        for i in 0..=j {
            if i == j {
                for g in 0..k {
                    outputs[g][(i, i)] = inputs[g][(i, i)];
                }
                continue;
            }
            for g in 0..k {
                buf[g] = inputs[g][(i, j)];
            }
            fused_prox_in_place(&mut buf, shrink, fuse, &mut scratch);
            for g in 0..k {
                outputs[g][(i, j)] = buf[g];
                outputs[g][(j, i)] = buf[g];
            }
        }
    }
}

/// Entrywise fused-lasso prox over `K` symmetric matrices.
pub fn prox_matrix(a: &[SymMatrix], eta: f64, params: &PenaltyParams) -> Result<Vec<SymMatrix>> {
    if a.is_empty() {
        return Err(FglError::InvalidInput("prox_matrix needs K >= 1".into()));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(FglError::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    params.validate()?;
    let p = a[0].dim();
    if a.iter().any(|m| m.dim() != p) {
        return Err(FglError::InvalidInput("all matrices must share dimension p".into()));
    }
    let inputs: Vec<DMatrix<f64>> = a.iter().map(|m| m.as_matrix().clone()).collect();
    let mut outputs = vec![DMatrix::zeros(p, p); a.len()];
    prox_entries(&inputs, eta, params, &mut outputs);
    outputs.into_iter().map(SymMatrix::from_upper).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn problem(targets: &[f64], eta: f64, lambda: f64, rho: f64) -> ProxProblem {
        ProxProblem {
            targets: targets.to_vec(),
            eta,
            lambda,
            rho,
            is_diagonal: false,
        }
    }

    #[test]
    fn diagonal_passes_through() {
        let mut pr = problem(&[3.0, -1.0, 0.2], 1.0, 5.0, 5.0);
        pr.is_diagonal = true;
        assert_eq!(prox_fused_lasso(&pr).unwrap(), vec![3.0, -1.0, 0.2]);
    }

    #[test]
    fn zero_penalty_is_identity() {
        let pr = problem(&[3.0, -1.0, 0.2, 7.5], 2.0, 0.0, 0.0);
        assert_eq!(prox_fused_lasso(&pr).unwrap(), pr.targets);
    }

    #[test]
    fn two_group_fusion_dominates() {
        let z = prox_fused_lasso(&problem(&[3.0, 1.0], 1.0, 0.0, 2.0)).unwrap();
        assert_eq!(z, vec![2.0, 2.0]);
    }

    #[test]
    fn two_group_shift_then_threshold() {
        // shift toward each other by 0.5, then shrink by 1
        let z = prox_fused_lasso(&problem(&[3.0, -3.0], 1.0, 1.0, 0.5)).unwrap();
        assert_eq!(z, vec![1.5, -1.5]);
    }

    #[test]
    fn empty_and_bad_eta_rejected() {
        assert!(prox_fused_lasso(&problem(&[], 1.0, 0.1, 0.1)).is_err());
        assert!(prox_fused_lasso(&problem(&[1.0], 0.0, 0.1, 0.1)).is_err());
        assert!(prox_fused_lasso(&problem(&[1.0], 1.0, -0.1, 0.1)).is_err());
    }

    #[test]
    fn matrix_soft_threshold_kills_small_entry() {
        let a = SymMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let out = prox_matrix(&[a], 1.0, &PenaltyParams::new(0.5, 0.0).unwrap()).unwrap();
        assert_eq!(out[0].to_rows(), vec![vec![2.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn matrix_identical_inputs_identical_outputs() {
        let a = SymMatrix::from_rows(&[vec![2.0, 0.9, -0.4], vec![0.9, 1.0, 0.1], vec![-0.4, 0.1, 3.0]])
            .unwrap();
        let params = PenaltyParams::new(0.2, 0.7).unwrap();
        let out = prox_matrix(&[a.clone(), a.clone()], 1.0, &params).unwrap();
        assert_eq!(out[0], out[1]);
        let single = prox_matrix(&[a], 1.0, &PenaltyParams::new(0.2, 0.0).unwrap()).unwrap();
        assert_eq!(out[0], single[0]);
    }

    #[test]
    fn matrix_dimension_mismatch() {
        let params = PenaltyParams::new(0.1, 0.1).unwrap();
        let r = prox_matrix(&[SymMatrix::identity(2), SymMatrix::identity(3)], 1.0, &params);
        assert!(matches!(r, Err(FglError::InvalidInput(_))));
    }

    proptest! {
        #[test]
        fn satisfies_subgradient_optimality(
            a in prop::collection::vec(-3.0f64..3.0, 2..=3),
            eta in 0.5f64..2.0,
            lambda in 0.0f64..1.5,
            rho in 0.0f64..1.5,
        ) {
            let pr = problem(&a, eta, lambda, rho);
            let z = prox_fused_lasso(&pr).unwrap();
            let grad: Vec<f64> = z.iter().zip(&a).map(|(zk, ak)| eta * (zk - ak)).collect();
            let r = subgradient_residual(&grad, &z, lambda, rho);
            prop_assert!(r <= 1e-8, "residual {}", r);
        }

        #[test]
        fn lambda_monotone(
            a in prop::collection::vec(-3.0f64..3.0, 1..=5),
            lambda in 0.0f64..1.0,
            extra in 0.0f64..1.0,
            rho in 0.0f64..1.0,
        ) {
            let lo = prox_fused_lasso(&problem(&a, 1.0, lambda, rho)).unwrap();
            let hi = prox_fused_lasso(&problem(&a, 1.0, lambda + extra, rho)).unwrap();
            for (l, h) in lo.iter().zip(&hi) {
                prop_assert!(h.abs() <= l.abs() + 1e-12);
            }
        }

        #[test]
        fn large_rho_fuses_everything(
            a in prop::collection::vec(-3.0f64..3.0, 2..=5),
            eta in 0.5f64..2.0,
            lambda in 0.0f64..0.5,
        ) {
            let spread = a.iter().cloned().fold(f64::MIN, f64::max)
                - a.iter().cloned().fold(f64::MAX, f64::min);
            let rho = eta * spread + 1e-3;
            let z = prox_fused_lasso(&problem(&a, eta, lambda, rho)).unwrap();
            let gap = z.iter().cloned().fold(f64::MIN, f64::max)
                - z.iter().cloned().fold(f64::MAX, f64::min);
            prop_assert!(gap <= 1e-8);
        }

        #[test]
        fn permutation_equivariant(
            a in prop::collection::vec(-3.0f64..3.0, 3..=6),
            lambda in 0.0f64..1.0,
            rho in 0.0f64..1.0,
            shift in 0usize..6,
        ) {
            let k = a.len();
            let perm: Vec<usize> = (0..k).map(|i| (i + shift) % k).rev().collect();
            let permuted: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
            let z = prox_fused_lasso(&problem(&a, 1.3, lambda, rho)).unwrap();
            let zp = prox_fused_lasso(&problem(&permuted, 1.3, lambda, rho)).unwrap();
            for (r, &i) in perm.iter().enumerate() {
                prop_assert!((zp[r] - z[i]).abs() <= 1e-12);
            }
        }

        #[test]
        fn prox_matrix_exactly_symmetric(
            vals in prop::collection::vec(-2.0f64..2.0, 3 * 16),
            lambda in 0.0f64..1.0,
            rho in 0.0f64..1.0,
        ) {
            let mats: Vec<SymMatrix> = vals
                .chunks(16)
                .map(|c| SymMatrix::from_upper(DMatrix::from_column_slice(4, 4, c)).unwrap())
                .collect();
            let out = prox_matrix(&mats, 1.0, &PenaltyParams::new(lambda, rho).unwrap()).unwrap();
            for m in &out {
                for i in 0..4 {
                    for j in 0..4 {
                        prop_assert_eq!(m.get(i, j).to_bits(), m.get(j, i).to_bits());
                    }
                }
            }
        }
    }
}
