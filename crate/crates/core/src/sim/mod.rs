//! Synthetic ground truths and Monte-Carlo studies of the de-biased tests.

mod decompose;
mod experiment;
mod generate;

pub use decompose::{decompose_debias_error, DebiasDecomposition};
pub use experiment::{
    coverage_hits, histogram, ks_critical_value, ks_statistic_normal, mean_sd, median,
    replicate_covariances, run_coverage, run_fluctuation, CoverageReport, Design, EntryCoverage,
    ExperimentConfig, FluctuationResult, HistogramBin, RateSample, RateStudy,
};
pub use generate::{
    derive_seed, generate_precision, sample_gaussian, sample_with_covariance, support_of,
    GroundTruth, PrecisionGenConfig,
};
