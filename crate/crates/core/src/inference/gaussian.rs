//! Quantiles of the supremum of a centred Gaussian vector.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::covariance::CovarianceEstimate;
use crate::rng::{Lane, LaneRng, RandomStream};

pub const DEFAULT_N_SIM: usize = 10_000;

/// Eigenpairs below this fraction of the largest eigenvalue are dropped.
const RANK_CUTOFF: f64 = 1e-14;

const SIM_CHUNK: usize = 512;

/// Square-root factor `L` with `L Lᵀ ≈ Σ`, from the symmetric eigendecomposition.
#[derive(Debug, Clone)]
pub struct GaussianSupSampler {
    factor: DMatrix<f64>,
}

impl GaussianSupSampler {
    pub fn new(cov: &CovarianceEstimate) -> Self {
        let eig = SymmetricEigen::new(cov.matrix().clone());
        let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&k| eig.eigenvalues[k] > RANK_CUTOFF * top && eig.eigenvalues[k] > 0.0)
            .collect();
        let d = cov.dim();
        let factor = DMatrix::from_fn(d, keep.len(), |i, c| {
            let k = keep[c];
            eig.eigenvectors[(i, k)] * eig.eigenvalues[k].sqrt()
        });
        Self { factor }
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    /// `sup_j |(L z)_j|` for simulations `0..n_sim`, sorted ascending.
    ///
    /// Simulation `i` reads its normals from lane index `i · 2⌈r/2⌉`.
    pub fn sup_samples(&self, n_sim: usize, stream: &RandomStream, lane: Lane) -> Vec<f64> {
        let r = self.rank();
        if r == 0 {
            return vec![0.0; n_sim];
        }
        let footprint = LaneRng::normal_footprint(r);
        let chunks: Vec<Vec<f64>> = (0..n_sim.div_ceil(SIM_CHUNK))
            .into_par_iter()
            .map(|c| {
                let lo = c * SIM_CHUNK;
                let hi = (lo + SIM_CHUNK).min(n_sim);
                let mut rng = stream.lane_at(lane, lo as u64 * footprint);
                let mut z = vec![0.0; r];
                (lo..hi)
                    .map(|_| {
                        rng.fill_normal(&mut z);
                        let mut sup: f64 = 0.0;
                        for row in self.factor.row_iter() {
                            let g: f64 = row.iter().zip(&z).map(|(a, b)| a * b).sum();
                            sup = sup.max(g.abs());
                        }
                        sup
                    })
                    .collect()
            })
            .collect();
        let mut all: Vec<f64> = chunks.into_iter().flatten().collect();
        all.sort_by(f64::total_cmp);
        all
    }
}

/// Quantile of sorted data by linear interpolation between order statistics
/// (the `(n - 1) p` rule).
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("level", format!("{level} is not in (0, 1)")))
    }
}

/// Simulated `level`-quantile of `sup |G|` for `G ~ N(0, cov)`.
pub fn gaussian_sup_quantile(
    cov: &CovarianceEstimate,
    level: f64,
    n_sim: usize,
    stream: &RandomStream,
    lane: Lane,
) -> Result<f64> {
    check_level(level)?;
    if n_sim < 2 {
        return Err(Error::invalid("n_sim", "need at least 2 simulations"));
    }
    let sups = GaussianSupSampler::new(cov).sup_samples(n_sim, stream, lane);
    Ok(quantile_sorted(&sups, level))
}

/// `-u² / (2 max_t R(t, t))`, the leading term of `ln P(sup |G| > u)`.
pub fn tail_log_asymptote(u: f64, cov: &CovarianceEstimate) -> Result<f64> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::invalid("u", "must be positive"));
    }
    let s = cov.max_variance();
    if s <= 0.0 {
        return Err(Error::Undefined(
            "zero-variance covariance has no Gaussian tail".into(),
        ));
    }
    Ok(-u * u / (2.0 * s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PointSet;
    use crate::inference::covariance::CovarianceSource;
    use crate::rng::Channel;

    fn cov(m: DMatrix<f64>) -> CovarianceEstimate {
        let pts = PointSet::from_scalars((0..m.nrows()).map(|i| i as f64).collect()).unwrap();
        CovarianceEstimate::new(pts, m, CovarianceSource::Limit).unwrap()
    }

    fn lane() -> Lane {
        Lane::new(Channel::Gauss, 0, 0)
    }

    #[test]
    fn scalar_quantiles() {
        let s = RandomStream::new(1);
        let u = gaussian_sup_quantile(
            &cov(DMatrix::from_element(1, 1, 1.0)),
            0.95,
            100_000,
            &s,
            lane(),
        )
        .unwrap();
        assert!((u - 1.96).abs() < 0.02, "{u}");
        let u = gaussian_sup_quantile(
            &cov(DMatrix::from_element(1, 1, 4.0)),
            0.95,
            100_000,
            &s,
            lane(),
        )
        .unwrap();
        assert!((u - 3.92).abs() < 0.04, "{u}");
    }

    #[test]
    fn identity_two_by_two() {
        let s = RandomStream::new(2);
        let u = gaussian_sup_quantile(&cov(DMatrix::identity(2, 2)), 0.95, 100_000, &s, lane())
            .unwrap();
        assert!((u - 2.236).abs() < 0.03, "{u}");
    }

    #[test]
    fn zero_matrix_and_levels() {
        let s = RandomStream::new(3);
        let z = cov(DMatrix::zeros(3, 3));
        assert_eq!(
            gaussian_sup_quantile(&z, 0.9, 1000, &s, lane()).unwrap(),
            0.0
        );
        assert!(gaussian_sup_quantile(&z, 1.0, 1000, &s, lane()).is_err());
        assert!(tail_log_asymptote(1.0, &z).is_err());
    }

    #[test]
    fn asymptote_values() {
        assert_eq!(
            tail_log_asymptote(2.0, &cov(DMatrix::identity(1, 1))).unwrap(),
            -2.0
        );
        assert_eq!(
            tail_log_asymptote(3.0, &cov(DMatrix::from_element(1, 1, 0.25))).unwrap(),
            -18.0
        );
    }

    #[test]
    fn order_statistic_interpolation() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.0);
        assert_eq!(quantile_sorted(&v, 0.9), 3.6);
    }
}
