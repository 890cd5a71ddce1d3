//! Finite point sets standing in for the compact metric space `T`.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points of a common dimension, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::invalid(
                "coords",
                format!("length {} is not a multiple of dim {dim}", coords.len()),
            ));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(
                "coords",
                format!("coordinate {i} is not finite"),
            ));
        }
        Ok(Self { dim, coords })
    }

    /// One-dimensional points.
    pub fn from_scalars(values: Vec<f64>) -> Result<Self> {
        Self::new(1, values)
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim: dim.max(1),
            coords: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Subset in the order given by `indices`.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        PointSet {
            dim: self.dim,
            coords,
        }
    }

    /// Distinct points (bitwise) in order of first appearance, plus the map
    /// from each original index to its distinct representative.
    pub fn dedup(&self) -> (PointSet, Vec<usize>) {
        let mut seen: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
        let mut firsts = Vec::new();
        let mut map = Vec::with_capacity(self.len());
        for (i, p) in self.iter().enumerate() {
            let key: Vec<u64> = p.iter().map(|c| c.to_bits()).collect();
            let next = firsts.len();
            let id = *seen.entry(key).or_insert_with(|| {
                firsts.push(i);
                next
            });
            map.push(id);
        }
        (self.select(&firsts), map)
    }
}

/// Metric on `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distance {
    #[default]
    Euclidean,
    Chebyshev,
}

impl Distance {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Distance::Chebyshev => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        }
    }
}

/// Node placement and weights along each axis of `[0, 1]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridRule {
    /// Equispaced nodes including both endpoints, equal weights.
    #[default]
    Uniform,
    /// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
    GaussLegendre,
}

/// Recipe for a tensor-product grid on `[0, 1]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub points_per_axis: usize,
    #[serde(default)]
    pub distance: Distance,
    #[serde(default)]
    pub rule: GridRule,
}

impl GridSpec {
    pub fn new(dim: usize, points_per_axis: usize) -> Self {
        Self {
            dim,
            points_per_axis,
            distance: Distance::Euclidean,
            rule: GridRule::Uniform,
        }
    }

    pub fn with_rule(mut self, rule: GridRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn with_distance(mut self, distance: Distance) -> Self {
        self.distance = distance;
        self
    }

    /// Same recipe with `factor` times as many points per axis.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            points_per_axis: self.points_per_axis * factor,
            ..*self
        }
    }
}

/// Evaluation points of `T` with quadrature weights and a metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSpaceGrid {
    points: PointSet,
    weights: Vec<f64>,
    distance: Distance,
    spec: Option<GridSpec>,
}

impl MetricSpaceGrid {
    /// Grid from explicit points. Weights must be non-negative and sum to one.
    pub fn from_points(points: PointSet, weights: Vec<f64>, distance: Distance) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("grid", "needs at least 2 points"));
        }
        if weights.len() != points.len() {
            return Err(Error::invalid(
                "weights",
                format!("{} weights for {} points", weights.len(), points.len()),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights", "must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "weights",
                format!("sum to {total}, expected 1"),
            ));
        }
        Ok(Self {
            points,
            weights,
            distance,
            spec: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.point(i)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn distance(&self) -> Distance {
        self.distance
    }

    pub fn spec(&self) -> Option<&GridSpec> {
        self.spec.as_ref()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.distance.eval(self.point(i), self.point(j))
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        let n = self.len();
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                d = d.max(self.dist(i, j));
            }
        }
        d
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, nodes ascending, weights summing to one.
pub fn gauss_legendre_unit(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let deg = NonZeroUsize::new(n).ok_or_else(|| Error::invalid("nodes", "must be positive"))?;
    let rule = GaussLegendre::new(deg);
    let mut pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

fn axis_rule(spec: &GridSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = spec.points_per_axis;
    match spec.rule {
        GridRule::Uniform => {
            if n < 2 {
                return Err(Error::invalid(
                    "points_per_axis",
                    "uniform rule needs at least 2",
                ));
            }
            let nodes = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            Ok((nodes, vec![1.0 / n as f64; n]))
        }
        GridRule::GaussLegendre => gauss_legendre_unit(n),
    }
}

/// Tensor-product grid on `[0, 1]^d`; the last coordinate varies fastest.
pub fn build_grid(spec: &GridSpec) -> Result<MetricSpaceGrid> {
    if spec.dim == 0 {
        return Err(Error::invalid("dim", "must be positive"));
    }
    if spec.points_per_axis == 0 {
        return Err(Error::invalid("points_per_axis", "must be positive"));
    }
    let (nodes, w) = axis_rule(spec)?;
    let n = nodes.len();
    let total = n
        .checked_pow(spec.dim as u32)
        .filter(|t| *t <= 1 << 24)
        .ok_or_else(|| Error::invalid("points_per_axis", "grid too large"))?;
    let mut coords = Vec::with_capacity(total * spec.dim);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; spec.dim];
    for _ in 0..total {
        let mut weight = 1.0;
        for &i in &idx {
            coords.push(nodes[i]);
            weight *= w[i];
        }
        weights.push(weight);
        for a in (0..spec.dim).rev() {
            idx[a] += 1;
            if idx[a] < n {
                break;
            }
            idx[a] = 0;
        }
    }
    let mut grid =
        MetricSpaceGrid::from_points(PointSet::new(spec.dim, coords)?, weights, spec.distance)?;
    grid.spec = Some(*spec);
    Ok(grid)
}
