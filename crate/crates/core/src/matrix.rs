//! Dense symmetric-matrix kernels and sample moments.
//!
//! Every matrix that enters the estimator (covariances, precisions,
//! correlations, diagonal scales) is stored as a [`SymMatrix`], which keeps
//! the upper triangle canonical and mirrors it into the lower triangle so
//! that `m[(i, j)] == m[(j, i)]` holds bit-for-bit.

use faer::{Mat, Side};
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{FglError, Result};

/// Relative tolerance used by [`SymMatrix::new`] when accepting a nearly
/// symmetric input.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// A dense, exactly symmetric `p × p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates approximate symmetry, then mirrors the upper triangle.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        let scale = m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        let p = m.nrows();
        for j in 0..p {
            for i in 0..j {
                let gap = (m[(i, j)] - m[(j, i)]).abs();
                if !(gap <= SYMMETRY_TOL * scale) {
                    return Err(FglError::InvalidInput(format!(
                        "matrix is not symmetric at ({i}, {j}): gap {gap:e}"
                    )));
                }
            }
        }
        Self::from_upper(m)
    }

    /// Builds a symmetric matrix from the upper triangle of `m`, ignoring the
    /// lower triangle entirely.
    pub fn from_upper(mut m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        let p = m.nrows();
        for j in 0..p {
            for i in 0..j {
                m[(j, i)] = m[(i, j)];
            }
        }
        Ok(SymMatrix(m))
    }

    /// `(m + mᵀ) / 2`.
    pub fn symmetrize(m: &DMatrix<f64>) -> Result<Self> {
        check_square(m)?;
        let p = m.nrows();
        let mut out = m.clone();
        for j in 0..p {
            for i in 0..j {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(SymMatrix(out))
    }

    pub fn identity(p: usize) -> Self {
        SymMatrix(DMatrix::identity(p, p))
    }

    pub fn zeros(p: usize) -> Self {
        SymMatrix(DMatrix::zeros(p, p))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Row-major nested vectors, the layout used by the JSON formats.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(FglError::InvalidInput(format!(
                "expected {p} columns in every row of a {p}x{p} matrix"
            )));
        }
        Self::new(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let p = self.dim();
        (0..p)
            .map(|i| (0..p).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        SymMatrix(&self.0 * c)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Inverse of a positive definite matrix through its Cholesky factor.
    pub fn inverse_pd(&self) -> Result<SymMatrix> {
        let chol = Cholesky::new(self.0.clone()).ok_or(FglError::NotPositiveDefinite)?;
        SymMatrix::symmetrize(&chol.inverse())
    }

    pub fn is_positive_definite(&self) -> bool {
        self.is_finite() && Cholesky::new(self.0.clone()).is_some()
    }

    /// Number of nonzero entries strictly above the diagonal.
    pub fn upper_nonzeros(&self) -> usize {
        let p = self.dim();
        (0..p)
            .flat_map(|j| (0..j).map(move |i| (i, j)))
            .filter(|&(i, j)| self.0[(i, j)] != 0.0)
            .count()
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(FglError::InvalidInput(format!(
            "matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(FglError::InvalidInput("matrix dimension must be at least 1".into()));
    }
    Ok(())
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        SymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Eigen-decomposition with eigenvalues sorted ascending and matching
/// orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomp {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomp {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// `V diag(f(e)) Vᵀ`, symmetrized.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let p = self.eigenvalues.len();
        let mut scaled = self.eigenvectors.clone();
        for (j, &e) in self.eigenvalues.iter().enumerate() {
            let s = f(e);
            scaled.column_mut(j).scale_mut(s);
        }
        let full = &scaled * self.eigenvectors.transpose();
        debug_assert_eq!(full.nrows(), p);
        SymMatrix::from_upper(full).expect("square by construction")
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(|e| e)
    }
}

pub fn sym_eigen(m: &SymMatrix) -> Result<SpectralDecomp> {
    if !m.is_finite() {
        return Err(FglError::InvalidInput("matrix has non-finite entries".into()));
    }
    // nalgebra's symmetric QR iteration can return NaN on block-sparse input,
    // so the decomposition goes through faer.
    let p = m.dim();
    let a = m.as_matrix();
    let src = Mat::<f64>::from_fn(p, p, |i, j| a[(i, j)]);
    let eig = src
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| FglError::InvalidInput(format!("eigendecomposition failed: {e:?}")))?;
    let (s, u) = (eig.S(), eig.U());
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| s[x].total_cmp(&s[y]));
    let eigenvalues = DVector::from_iterator(p, order.iter().map(|&k| s[k]));
    let eigenvectors = DMatrix::from_fn(p, p, |i, c| u[(i, order[c])]);
    if !eigenvalues.iter().all(|v| v.is_finite()) {
        return Err(FglError::InvalidInput("eigendecomposition produced non-finite values".into()));
    }
    Ok(SpectralDecomp {
        eigenvalues,
        eigenvectors,
    })
}

/// `log det(m)` from the Cholesky factor.
pub fn log_det_pd(m: &SymMatrix) -> Result<f64> {
    if !m.is_finite() {
        return Err(FglError::NotPositiveDefinite);
    }
    let chol = Cholesky::new(m.as_matrix().clone()).ok_or(FglError::NotPositiveDefinite)?;
    let l = chol.l_dirty();
    Ok(2.0 * (0..m.dim()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

/// `(1/n) Σᵢ (xᵢ − m)(xᵢ − m)ᵀ` over the rows of `x`, where `m` is the column
/// mean when `center` is set and zero otherwise.
pub fn sample_covariance(x: &DMatrix<f64>, center: bool) -> Result<SymMatrix> {
    let n = x.nrows();
    if n < 2 {
        return Err(FglError::InsufficientData { n });
    }
    if x.ncols() == 0 {
        return Err(FglError::InvalidInput("observation matrix has no columns".into()));
    }
    let mut xc = x.clone();
    if center {
        for mut col in xc.column_iter_mut() {
            let mean = col.sum() / n as f64;
            col.add_scalar_mut(-mean);
        }
    }
    let s = xc.tr_mul(&xc) / n as f64;
    SymMatrix::from_upper(s)
}

/// Diagonal scale `W = diag(Σ)^{1/2}` and correlation `R = W⁻¹ Σ W⁻¹`.
#[derive(Debug, Clone)]
pub struct CorrelationSummary {
    pub w: SymMatrix,
    pub r: SymMatrix,
}

impl CorrelationSummary {
    /// Diagonal entries of `W`.
    pub fn scales(&self) -> Vec<f64> {
        self.w.diagonal()
    }
}

pub fn correlation_summary(sigma: &SymMatrix) -> Result<CorrelationSummary> {
    let p = sigma.dim();
    let d = sigma.diagonal();
    if let Some((i, v)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
        return Err(FglError::DegenerateVariance(format!(
            "diagonal entry {i} is {v}, expected strictly positive"
        )));
    }
    let w: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
    let mut r = DMatrix::zeros(p, p);
    for j in 0..p {
        for i in 0..j {
            r[(i, j)] = sigma.get(i, j) / (w[i] * w[j]);
        }
        r[(j, j)] = 1.0;
    }
    Ok(CorrelationSummary {
        w: SymMatrix::from_diagonal(&w),
        r: SymMatrix::from_upper(r)?,
    })
}

/// Covariance, scale, and correlation for one group.
#[derive(Debug, Clone)]
pub struct CovarianceSummary {
    pub n: usize,
    pub sigma: SymMatrix,
    pub w: SymMatrix,
    pub r: SymMatrix,
}

impl CovarianceSummary {
    pub fn from_observations(x: &DMatrix<f64>, center: bool) -> Result<Self> {
        let sigma = sample_covariance(x, center)?;
        let CorrelationSummary { w, r } = correlation_summary(&sigma)?;
        Ok(CovarianceSummary {
            n: x.nrows(),
            sigma,
            w,
            r,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatrixNorms {
    pub frobenius: f64,
    /// `max |m_ij|`
    pub sup: f64,
    /// `Σ |m_ij|`
    pub l1_entrywise: f64,
    /// `max_j Σ_i |m_ij|`
    pub l1_operator: f64,
}

pub fn norms(m: &DMatrix<f64>) -> MatrixNorms {
    let mut sup = 0.0_f64;
    let mut sq = 0.0;
    let mut l1 = 0.0;
    let mut op = 0.0_f64;
    for col in m.column_iter() {
        let mut col_sum = 0.0;
        for &v in col.iter() {
            let a = v.abs();
            sup = sup.max(a);
            sq += v * v;
            col_sum += a;
        }
        l1 += col_sum;
        op = op.max(col_sum);
    }
    MatrixNorms {
        frobenius: sq.sqrt(),
        sup,
        l1_entrywise: l1,
        l1_operator: op,
    }
}

/// `max |m_ij|`
pub fn sup_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// K observation matrices (rows are observations) over a shared set of `p`
/// variables.
#[derive(Debug, Clone)]
pub struct MultiGroupDataset {
    groups: Vec<DMatrix<f64>>,
    labels: Vec<String>,
}

impl MultiGroupDataset {
    pub fn new(groups: Vec<DMatrix<f64>>, labels: Vec<String>) -> Result<Self> {
        if groups.is_empty() {
            return Err(FglError::InvalidInput("dataset needs at least one group".into()));
        }
        if labels.len() != groups.len() {
            return Err(FglError::InvalidInput(format!(
                "{} labels for {} groups",
                labels.len(),
                groups.len()
            )));
        }
        let p = groups[0].ncols();
        for (k, g) in groups.iter().enumerate() {
            if g.ncols() != p {
                return Err(FglError::InvalidInput(format!(
                    "group {k} has {} variables, expected {p}",
                    g.ncols()
                )));
            }
            if g.nrows() < 2 {
                return Err(FglError::InsufficientData { n: g.nrows() });
            }
        }
        Ok(MultiGroupDataset { groups, labels })
    }

    pub fn unlabeled(groups: Vec<DMatrix<f64>>) -> Result<Self> {
        let labels = (1..=groups.len()).map(|k| format!("group{k}")).collect();
        Self::new(groups, labels)
    }

    pub fn p(&self) -> usize {
        self.groups[0].ncols()
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[DMatrix<f64>] {
        &self.groups
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn sample_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.nrows()).collect()
    }

    pub fn covariances(&self, center: bool) -> Result<Vec<SymMatrix>> {
        self.groups.iter().map(|g| sample_covariance(g, center)).collect()
    }

    pub fn summaries(&self, center: bool) -> Result<Vec<CovarianceSummary>> {
        self.groups
            .iter()
            .map(|g| CovarianceSummary::from_observations(g, center))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(p: usize, seed: u64) -> SymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        SymMatrix::symmetrize(&m).unwrap()
    }

    fn random_pd(p: usize, seed: u64) -> SymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        let m = &a * a.transpose() + DMatrix::identity(p, p) * 0.5;
        SymMatrix::symmetrize(&m).unwrap()
    }

    #[test]
    fn eigen_identity_and_diagonal() {
        let e = sym_eigen(&SymMatrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[1.0, 1.0, 1.0]);
        let e = sym_eigen(&SymMatrix::from_diagonal(&[5.0, 2.0])).unwrap();
        assert!((e.eigenvalues[0] - 2.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_reconstructs_random_symmetric() {
        let m = random_symmetric(6, 11);
        let e = sym_eigen(&m).unwrap();
        let max_entry = sup_norm(m.as_matrix());
        let err = sup_norm(&(e.reconstruct().as_matrix() - m.as_matrix()));
        assert!(err < 1e-10 * 6.0 * max_entry, "reconstruction error {err}");
        let gram = e.eigenvectors.transpose() * &e.eigenvectors;
        assert!(sup_norm(&(gram - DMatrix::identity(6, 6))) < 1e-10);
        assert!(e.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn eigen_rejects_non_finite() {
        let mut m = DMatrix::identity(2, 2);
        m[(0, 0)] = f64::NAN;
        let s = SymMatrix::from_upper(m).unwrap();
        assert!(matches!(sym_eigen(&s), Err(FglError::InvalidInput(_))));
    }

    #[test]
    fn log_det_cases() {
        assert_eq!(log_det_pd(&SymMatrix::identity(4)).unwrap(), 0.0);
        let v = log_det_pd(&SymMatrix::from_diagonal(&[2.0, 3.0])).unwrap();
        assert!((v - 6.0_f64.ln()).abs() < 1e-14);
        let m = random_pd(5, 3);
        let e = sym_eigen(&m).unwrap();
        let oracle: f64 = e.eigenvalues.iter().map(|v| v.ln()).sum();
        assert!((log_det_pd(&m).unwrap() - oracle).abs() < 1e-10);
        let prod: f64 = e.eigenvalues.iter().product();
        let rel = (log_det_pd(&m).unwrap().exp() - prod).abs() / prod;
        assert!(rel < 1e-8);
    }

    #[test]
    fn log_det_rejects_indefinite() {
        let m = SymMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(matches!(log_det_pd(&m), Err(FglError::NotPositiveDefinite)));
    }

    #[test]
    fn covariance_hand_cases() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let s = sample_covariance(&x, false).unwrap();
        assert_eq!(s.to_rows(), vec![vec![1.0, 0.0], vec![0.0, 0.0]]);

        let x = DMatrix::from_row_slice(3, 2, &[1.0, 4.0, 2.0, 4.0, 6.0, 4.0]);
        let s = sample_covariance(&x, true).unwrap();
        assert_eq!(s.get(1, 1), 0.0);
        assert_eq!(s.get(0, 1), 0.0);
        assert!(s.get(0, 0) > 0.0);

        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(matches!(
            sample_covariance(&x, true),
            Err(FglError::InsufficientData { n: 1 })
        ));
    }

    #[test]
    fn covariance_of_standard_normal_draws() {
        use rand_distr::StandardNormal;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = DMatrix::from_fn(200, 10, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = sample_covariance(&x, true).unwrap();
        let err = sup_norm(&(s.as_matrix() - DMatrix::identity(10, 10)));
        assert!(err < 0.35, "max deviation {err}");
        let e = sym_eigen(&s).unwrap();
        let trace: f64 = s.diagonal().iter().sum();
        assert!(e.min_eigenvalue() >= -1e-10 * trace);
    }

    #[test]
    fn correlation_cases() {
        let c = correlation_summary(&SymMatrix::identity(3)).unwrap();
        assert_eq!(c.w, SymMatrix::identity(3));
        assert_eq!(c.r, SymMatrix::identity(3));

        let s = SymMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let c = correlation_summary(&s).unwrap();
        assert_eq!(c.scales(), vec![2.0, 1.0]);
        assert_eq!(c.r.to_rows(), vec![vec![1.0, 1.0], vec![1.0, 1.0]]);

        let bad = SymMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(matches!(
            correlation_summary(&bad),
            Err(FglError::DegenerateVariance(_))
        ));
    }

    #[test]
    fn correlation_round_trip() {
        let s = random_pd(8, 5);
        let c = correlation_summary(&s).unwrap();
        let back = c.w.as_matrix() * c.r.as_matrix() * c.w.as_matrix();
        assert!(sup_norm(&(back - s.as_matrix())) < 1e-12);
        assert!(c.r.diagonal().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn norm_hand_cases() {
        let n = norms(&DMatrix::identity(2, 2));
        assert_eq!(
            n,
            MatrixNorms {
                frobenius: 2.0_f64.sqrt(),
                sup: 1.0,
                l1_entrywise: 2.0,
                l1_operator: 1.0
            }
        );
        let n = norms(&DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, 0.0]));
        assert!((n.frobenius - 18.0_f64.sqrt()).abs() < 1e-15);
        assert_eq!((n.sup, n.l1_entrywise, n.l1_operator), (3.0, 6.0, 3.0));
    }

    #[test]
    fn norms_match_loop_oracle() {
        let m = random_symmetric(5, 9);
        let a = m.as_matrix();
        let (mut fro, mut sup, mut l1, mut op) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
        for j in 0..5 {
            let mut c = 0.0;
            for i in 0..5 {
                fro += a[(i, j)] * a[(i, j)];
                sup = sup.max(a[(i, j)].abs());
                l1 += a[(i, j)].abs();
                c += a[(i, j)].abs();
            }
            op = op.max(c);
        }
        let n = norms(a);
        assert!((n.frobenius - fro.sqrt()).abs() < 1e-14);
        assert!((n.sup - sup).abs() < 1e-14);
        assert!((n.l1_entrywise - l1).abs() < 1e-14);
        assert!((n.l1_operator - op).abs() < 1e-14);
        assert!(n.sup <= n.l1_operator);
        assert!(n.frobenius.powi(2) <= 5.0 * n.l1_operator.powi(2));
    }

    #[test]
    fn symmetric_construction() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.5, 1.0]);
        assert!(SymMatrix::new(m.clone()).is_err());
        let s = SymMatrix::from_upper(m).unwrap();
        assert_eq!(s.get(1, 0), 2.0);
        assert!(SymMatrix::from_upper(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn dataset_validation() {
        let a = DMatrix::zeros(3, 2);
        let b = DMatrix::zeros(4, 3);
        assert!(MultiGroupDataset::unlabeled(vec![a.clone(), b]).is_err());
        let c = DMatrix::zeros(1, 2);
        assert!(MultiGroupDataset::unlabeled(vec![a.clone(), c]).is_err());
        let d = MultiGroupDataset::unlabeled(vec![a.clone(), a]).unwrap();
        assert_eq!((d.k(), d.p()), (2, 2));
        assert_eq!(d.sample_sizes(), vec![3, 3]);
    }
}
