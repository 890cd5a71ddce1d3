//! Probability measures on `T` and sampling from them.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{MetricSpaceGrid, PointSet};
use crate::rng::{Lane, LaneRng, RandomStream};

/// Quantile function of a one-dimensional law on `[0, 1]`.
pub type QuantileFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A probability measure `μ` on `T`.
#[derive(Clone)]
pub enum MeasureSpec {
    /// Lebesgue measure on `[0, 1]^dim`.
    UniformCube { dim: usize },
    /// Finitely many atoms with the given probabilities.
    Discrete { atoms: PointSet, weights: Vec<f64> },
    /// One-dimensional law given by its quantile function.
    InverseCdf(QuantileFn),
}

impl fmt::Debug for MeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureSpec::UniformCube { dim } => {
                f.debug_struct("UniformCube").field("dim", dim).finish()
            }
            MeasureSpec::Discrete { atoms, weights } => f
                .debug_struct("Discrete")
                .field("atoms", &atoms.len())
                .field("weights", weights)
                .finish(),
            MeasureSpec::InverseCdf(_) => f.write_str("InverseCdf(..)"),
        }
    }
}

impl MeasureSpec {
    pub fn discrete(atoms: PointSet, weights: Vec<f64>) -> Result<Self> {
        let m = MeasureSpec::Discrete { atoms, weights };
        m.validate()?;
        Ok(m)
    }

    /// Discrete measure on the grid nodes weighted by the grid weights.
    pub fn from_grid(grid: &MetricSpaceGrid) -> Self {
        MeasureSpec::Discrete {
            atoms: grid.points().clone(),
            weights: grid.weights().to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MeasureSpec::UniformCube { dim } if *dim == 0 => {
                Err(Error::invalid("measure", "cube dimension must be positive"))
            }
            MeasureSpec::Discrete { atoms, weights } => {
                if atoms.is_empty() || atoms.len() != weights.len() {
                    return Err(Error::invalid(
                        "measure",
                        "atoms and weights must be non-empty and match",
                    ));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::invalid(
                        "measure",
                        "weights must be finite and non-negative",
                    ));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid("measure", format!("weights sum to {total}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MeasureSpec::UniformCube { dim } => *dim,
            MeasureSpec::Discrete { atoms, .. } => atoms.dim(),
            MeasureSpec::InverseCdf(_) => 1,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, MeasureSpec::Discrete { .. })
    }
}

/// Maps lane uniforms to points of a measure.
pub struct MeasureSampler<'a> {
    measure: &'a MeasureSpec,
    cdf: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> MeasureSampler<'a> {
    pub fn new(measure: &'a MeasureSpec) -> Self {
        let cdf = match measure {
            MeasureSpec::Discrete { weights, .. } => weights
                .iter()
                .scan(0.0, |acc, w| {
                    *acc += w;
                    Some(*acc)
                })
                .collect(),
            _ => Vec::new(),
        };
        let footprint = match measure {
            MeasureSpec::UniformCube { dim } => *dim,
            _ => 1,
        };
        Self {
            measure,
            cdf,
            scratch: vec![0.0; footprint],
        }
    }

    /// Draws one point, appending its coordinates to `out`.
    pub fn draw(&mut self, rng: &mut LaneRng, out: &mut Vec<f64>) {
        rng.fill_uniform(&mut self.scratch);
        let u = &self.scratch;
        match self.measure {
            MeasureSpec::UniformCube { .. } => out.extend_from_slice(u),
            MeasureSpec::Discrete { atoms, .. } => {
                let k = self
                    .cdf
                    .partition_point(|c| *c <= u[0])
                    .min(atoms.len() - 1);
                out.extend_from_slice(atoms.point(k));
            }
            MeasureSpec::InverseCdf(q) => out.push(q(u[0])),
        }
    }
}

/// `count` independent draws from `measure`, read from `lane` starting at index 0.
///
/// Draw `i` uses lane indices `i * d .. (i + 1) * d` (`d` the cube dimension, or 1),
/// so any prefix of a longer sample coincides with a shorter one.
pub fn sample_measure(
    measure: &MeasureSpec,
    count: usize,
    stream: &RandomStream,
    lane: Lane,
) -> Result<PointSet> {
    measure.validate()?;
    if count == 0 {
        return Err(Error::invalid("count", "must be positive"));
    }
    let dim = measure.dim();
    let mut sampler = MeasureSampler::new(measure);
    let mut rng = stream.lane(lane);
    let mut coords = Vec::with_capacity(count * dim);
    for i in 0..count {
        sampler.draw(&mut rng, &mut coords);
        if let Some(c) = coords[coords.len() - dim..].iter().find(|c| !c.is_finite()) {
            return Err(Error::non_finite(
                "measure sampler",
                format!("draw {i} ({c})"),
            ));
        }
    }
    PointSet::new(measure.dim(), coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Channel;

    fn lane() -> Lane {
        Lane::new(Channel::Xi, 0, 1)
    }

    #[test]
    fn prefix_property() {
        let s = RandomStream::new(5);
        let m = MeasureSpec::UniformCube { dim: 2 };
        let a = sample_measure(&m, 10, &s, lane()).unwrap();
        let b = sample_measure(&m, 4, &s, lane()).unwrap();
        assert_eq!(&a.coords()[..8], b.coords());
    }

    #[test]
    fn discrete_frequencies() {
        let atoms = PointSet::from_scalars(vec![0.0, 0.5, 1.0]).unwrap();
        let m = MeasureSpec::discrete(atoms, vec![0.25, 0.5, 0.25]).unwrap();
        let s = RandomStream::new(9);
        let p = sample_measure(&m, 40_000, &s, lane()).unwrap();
        let half = p.coords().iter().filter(|x| **x == 0.5).count() as f64 / 40_000.0;
        assert!((half - 0.5).abs() < 0.01);
    }

    #[test]
    fn inverse_cdf() {
        let m = MeasureSpec::InverseCdf(Arc::new(|u: f64| u * u));
        let s = RandomStream::new(3);
        let p = sample_measure(&m, 50_000, &s, lane()).unwrap();
        let mean = p.coords().iter().sum::<f64>() / 50_000.0;
        assert!((mean - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = RandomStream::new(0);
        assert!(sample_measure(&MeasureSpec::UniformCube { dim: 1 }, 0, &s, lane()).is_err());
        let atoms = PointSet::from_scalars(vec![0.0, 1.0]).unwrap();
        assert!(MeasureSpec::discrete(atoms, vec![0.3, 0.3]).is_err());
        let nan = MeasureSpec::InverseCdf(Arc::new(|_| f64::NAN));
        assert!(matches!(
            sample_measure(&nan, 3, &s, lane()),
            Err(Error::NonFinite { .. })
        ));
    }
}
