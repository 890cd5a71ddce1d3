//! Covariances, Gaussian-supremum quantiles, confidence bands and studies.

pub mod band;
pub mod covariance;
pub mod entropy;
pub mod gaussian;
pub mod study;

pub use band::{confidence_band, ConfidenceBand};
pub use covariance::{
    empirical_covariance, estimate_covariance, estimate_covariance_volterra, limit_covariance,
    limit_covariance_volterra, psd_repair, CovarianceEstimate, CovarianceSource,
};
pub use entropy::{entropy_diagnostic, EntropyDiagnostic};
pub use gaussian::{gaussian_sup_quantile, tail_log_asymptote, GaussianSupSampler};
pub use study::{
    band_run, coverage_study, rate_study, BandOptions, BandRun, CoverageStudy, RateStudy,
    StudyProblem,
};
