//! Interpolation in the time variable `τ ∈ [0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interpolation scheme between τ-grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauInterpolation {
    Linear,
    /// Four-point Lagrange interpolation (one-sided near the ends).
    #[default]
    Cubic,
}

impl TauInterpolation {
    fn min_nodes(&self) -> usize {
        match self {
            TauInterpolation::Linear => 2,
            TauInterpolation::Cubic => 4,
        }
    }
}

/// `n` equispaced nodes on `[0, 1]`.
pub fn uniform_tau_grid(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::invalid("tau_grid", "needs at least 2 nodes"));
    }
    Ok((0..n).map(|i| i as f64 / (n - 1) as f64).collect())
}

pub(crate) fn validate_tau_grid(tau: &[f64], interpolation: TauInterpolation) -> Result<()> {
    if tau.len() < interpolation.min_nodes() {
        return Err(Error::invalid(
            "tau_grid",
            format!(
                "{} nodes are too few for {interpolation:?} interpolation",
                tau.len()
            ),
        ));
    }
    if tau[0] != 0.0 || *tau.last().unwrap() != 1.0 {
        return Err(Error::invalid("tau_grid", "must start at 0 and end at 1"));
    }
    if tau
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
    {
        return Err(Error::invalid("tau_grid", "must be strictly increasing"));
    }
    Ok(())
}

/// Interpolates the nodal values `column` (one per τ-node) at `x ∈ [0, 1]`.
#[inline]
pub fn interpolate(tau: &[f64], column: &[f64], x: f64, scheme: TauInterpolation) -> f64 {
    debug_assert_eq!(tau.len(), column.len());
    let n = tau.len();
    // Index of the interval [tau[i], tau[i + 1]] containing x.
    let i = tau.partition_point(|t| *t <= x).clamp(1, n - 1) - 1;
    match scheme {
        TauInterpolation::Linear => {
            let h = tau[i + 1] - tau[i];
            let w = (x - tau[i]) / h;
            column[i] + w * (column[i + 1] - column[i])
        }
        TauInterpolation::Cubic => {
            let s = i.saturating_sub(1).min(n - 4);
            let xs = &tau[s..s + 4];
            let ys = &column[s..s + 4];
            let mut acc = 0.0;
            for a in 0..4 {
                let mut l = 1.0;
                for b in 0..4 {
                    if a != b {
                        l *= (x - xs[b]) / (xs[a] - xs[b]);
                    }
                }
                acc += l * ys[a];
            }
            acc
        }
    }
}
