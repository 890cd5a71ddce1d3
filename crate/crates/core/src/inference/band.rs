//! Uniform confidence bands `x_m^m ± u / √q(m)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::covariance::CovarianceEstimate;
use crate::inference::gaussian::{check_level, gaussian_sup_quantile};
use crate::rng::{Lane, RandomStream};

/// Relative slack in coverage checks, absorbing rounding in zero-width bands.
pub const COVER_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceBand {
    pub center: Vec<f64>,
    pub halfwidth: f64,
    pub level: f64,
    pub q_m: usize,
    /// The Gaussian-supremum quantile `u`.
    pub quantile: f64,
}

impl ConfidenceBand {
    /// Band from a known quantile `u`.
    pub fn from_quantile(center: Vec<f64>, quantile: f64, q_m: usize, level: f64) -> Result<Self> {
        check_level(level)?;
        if q_m == 0 {
            return Err(Error::invalid("q_m", "must be positive"));
        }
        if !(quantile.is_finite() && quantile >= 0.0) {
            return Err(Error::invalid(
                "quantile",
                "must be finite and non-negative",
            ));
        }
        Ok(Self {
            center,
            halfwidth: quantile / (q_m as f64).sqrt(),
            level,
            q_m,
            quantile,
        })
    }

    /// Whether `|center - target| ≤ halfwidth + extra` at every point.
    pub fn covers_with(&self, target: &[f64], extra: f64) -> bool {
        self.center
            .iter()
            .zip(target)
            .all(|(c, x)| (c - x).abs() <= self.halfwidth + extra + COVER_SLACK * (1.0 + x.abs()))
    }

    pub fn covers(&self, target: &[f64]) -> bool {
        self.covers_with(target, 0.0)
    }

    pub fn lower(&self) -> Vec<f64> {
        self.center.iter().map(|c| c - self.halfwidth).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.center.iter().map(|c| c + self.halfwidth).collect()
    }
}

/// Band `center ± u / √q_m` with `u` the simulated sup-quantile of `N(0, cov)`.
pub fn confidence_band(
    center: Vec<f64>,
    cov: &CovarianceEstimate,
    q_m: usize,
    level: f64,
    n_sim: usize,
    stream: &RandomStream,
    lane: Lane,
) -> Result<ConfidenceBand> {
    if center.len() != cov.dim() {
        return Err(Error::invalid(
            "center",
            "length differs from the covariance dimension",
        ));
    }
    let u = gaussian_sup_quantile(cov, level, n_sim, stream, lane)?;
    ConfidenceBand::from_quantile(center, u, q_m, level)
}
