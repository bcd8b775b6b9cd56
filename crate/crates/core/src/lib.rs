//! Joint estimation of several sparse precision matrices with the fused
//! graphical lasso, de-biased entrywise inference, and the Monte-Carlo
//! harness used to check coverage and normality of the resulting tests.
//!
//! ```no_run
//! use fglasso::{fit_fgl, debias, test_equal, AdmmSettings, PenaltyParams, SymMatrix};
//! # fn main() -> fglasso::Result<()> {
//! # let (s1, s2) = (SymMatrix::identity(3), SymMatrix::identity(3));
//! let fit = fit_fgl(&[s1.clone(), s2.clone()], &PenaltyParams::new(0.1, 0.05)?, &AdmmSettings::default())?;
//! let db = debias(&fit, &[s1, s2], &[200, 200])?;
//! let result = test_equal(&db, 0, 1, 0.05)?;
//! println!("z = {}", result.z);
//! # Ok(())
//! # }
//! ```

pub mod error;
pub mod inference;
pub mod io;
pub mod matrix;
pub mod penalty;
pub mod sim;
pub mod solver;
pub mod tuning;

pub use error::{FglError, Result};
pub use inference::{
    debias, debias_thetas, test_all_entries, test_equal, test_linear, DebiasedFit, LinearHypothesis,
    TestResult,
};
pub use matrix::{
    correlation_summary, log_det_pd, norms, sample_covariance, sym_eigen, CovarianceSummary,
    MatrixNorms, MultiGroupDataset, SpectralDecomp, SymMatrix,
};
pub use penalty::{prox_fused_lasso, prox_matrix, PenaltyParams, ProxProblem};
pub use solver::{
    fgl_objective, fit_fgl, fit_fgl_weighted, kkt_check, AdmmSettings, FglFit, KktReport, Scale,
    WeightedFit,
};
pub use tuning::{aic_score, penalty_grid, select_tuning_aic, AicRow, GridSpec, TuningSelection};
