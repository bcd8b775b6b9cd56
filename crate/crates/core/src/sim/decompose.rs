use nalgebra::DMatrix;

use crate::error::{FglError, Result};
use crate::inference::DebiasedFit;
use crate::matrix::{sup_norm, SymMatrix};

use super::generate::GroundTruth;

/// Split of the de-biasing error into a leading term and a remainder:
/// `Θ̂_d − Θ₀ = Ξ + Υ` with
///
/// * `Ξ = −Θ₀ (Σ̂ − Σ₀) Θ₀`
/// * `Υ = −(Θ̂ − Θ₀)(Σ̂ − Σ₀)Θ₀ − (Θ̂Σ̂ − I)(Θ̂ − Θ₀)`
#[derive(Debug, Clone)]
pub struct DebiasDecomposition {
    pub xi: Vec<SymMatrix>,
    /// Not symmetric in general.
    pub upsilon: Vec<DMatrix<f64>>,
    /// `‖Θ̂_d − Θ₀ − Ξ − Υ‖_∞` per group.
    pub identity_error: Vec<f64>,
    /// `√n ‖Σ_k a_k Υ_k‖_∞` per requested coefficient vector.
    pub rem_supnorm: Vec<f64>,
}

pub fn decompose_debias_error(
    db: &DebiasedFit,
    truth: &GroundTruth,
    sigmas: &[SymMatrix],
    coefficient_sets: &[Vec<f64>],
) -> Result<DebiasDecomposition> {
    let k = db.k();
    if truth.k() != k || sigmas.len() != k {
        return Err(FglError::InvalidInput(format!(
            "group counts differ: fit {k}, truth {}, covariances {}",
            truth.k(),
            sigmas.len()
        )));
    }
    let p = db.p();
    if truth.p() != p || sigmas.iter().any(|s| s.dim() != p) {
        return Err(FglError::InvalidInput("dimension mismatch".into()));
    }
    if coefficient_sets.iter().any(|a| a.len() != k) {
        return Err(FglError::InvalidInput("coefficient vector length must equal K".into()));
    }
    let n = db.common_n()? as f64;
    let eye = DMatrix::<f64>::identity(p, p);

    let mut xi = Vec::with_capacity(k);
    let mut upsilon = Vec::with_capacity(k);
    let mut identity_error = Vec::with_capacity(k);
    for g in 0..k {
        let theta_hat = db.thetas[g].as_matrix();
        let theta0 = truth.theta0[g].as_matrix();
        let sigma_hat = sigmas[g].as_matrix();
        let delta_sigma = sigma_hat - truth.sigma0[g].as_matrix();
        let delta_theta = theta_hat - theta0;

        let x = -(theta0 * &delta_sigma * theta0);
        let u = -(&delta_theta * &delta_sigma * theta0) - (theta_hat * sigma_hat - &eye) * &delta_theta;
        let lhs = db.thetas_d[g].as_matrix() - theta0;
        identity_error.push(sup_norm(&(lhs - &x - &u)));
        xi.push(SymMatrix::symmetrize(&x)?);
        upsilon.push(u);
    }

    let rem_supnorm = coefficient_sets
        .iter()
        .map(|a| {
            let mut comb = DMatrix::<f64>::zeros(p, p);
            for (coef, u) in a.iter().zip(&upsilon) {
                comb += u * *coef;
            }
            n.sqrt() * sup_norm(&comb)
        })
        .collect();

    Ok(DebiasDecomposition {
        xi,
        upsilon,
        identity_error,
        rem_supnorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::debias_thetas;
    use crate::matrix::sample_covariance;
    use crate::sim::generate::{generate_precision, sample_gaussian, PrecisionGenConfig};

    fn truth(seed: u64) -> GroundTruth {
        generate_precision(&PrecisionGenConfig {
            p: 8,
            alpha_tilde: 0.3,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn exact_estimates_give_zero_terms() {
        let t = truth(1);
        let db = debias_thetas(&t.theta0, &t.sigma0, &[100]).unwrap();
        let d = decompose_debias_error(&db, &t, &t.sigma0, &[vec![1.0]]).unwrap();
        assert!(sup_norm(d.xi[0].as_matrix()) < 1e-12);
        assert!(sup_norm(&d.upsilon[0]) < 1e-12);
        assert!(d.rem_supnorm[0] < 1e-10);
    }

    #[test]
    fn true_precision_leaves_only_leading_term() {
        let t = truth(2);
        let x = sample_gaussian(&t.theta0[0], 50, 3).unwrap();
        let s = sample_covariance(&x, true).unwrap();
        let db = debias_thetas(&t.theta0, &[s.clone()], &[50]).unwrap();
        let d = decompose_debias_error(&db, &t, &[s], &[vec![1.0]]).unwrap();
        assert_eq!(sup_norm(&d.upsilon[0]), 0.0);
        let lhs = db.thetas_d[0].as_matrix() - t.theta0[0].as_matrix();
        assert!(sup_norm(&(lhs - d.xi[0].as_matrix())) < 1e-10);
    }

    #[test]
    fn identity_holds_for_arbitrary_estimate() {
        let t = truth(4);
        let x = sample_gaussian(&t.theta0[0], 40, 5).unwrap();
        let s = sample_covariance(&x, true).unwrap();
        let theta_hat = s.inverse_pd().unwrap().scaled(0.9);
        let db = debias_thetas(&[theta_hat], &[s.clone()], &[40]).unwrap();
        let d = decompose_debias_error(&db, &t, &[s], &[vec![1.0]]).unwrap();
        assert!(d.identity_error[0] < 1e-10, "{}", d.identity_error[0]);
    }

    #[test]
    fn transposed_remainder_ordering_breaks_identity() {
        // the mirrored product (Θ̂ − Θ₀)(Σ̂Θ̂ − I) differs by an antisymmetric term
        let t = truth(6);
        let x = sample_gaussian(&t.theta0[0], 40, 7).unwrap();
        let s = sample_covariance(&x, true).unwrap();
        // an estimate that does not commute with Σ̂
        let mix = s.inverse_pd().unwrap().as_matrix() * 0.9 + DMatrix::identity(8, 8) * 0.05;
        let theta_hat = SymMatrix::from_upper(mix).unwrap();
        let (th, t0, sh) = (theta_hat.as_matrix(), t.theta0[0].as_matrix(), s.as_matrix());
        let eye = DMatrix::identity(8, 8);
        let ours = (th * sh - &eye) * (th - t0);
        let mirrored = (th - t0) * (sh * th - &eye);
        let gap = &ours - &mirrored;
        assert!(sup_norm(&gap) > 1e-6);
        assert!(sup_norm(&(&gap + gap.transpose())) < 1e-10);
    }
}
