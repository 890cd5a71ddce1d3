//! Empirical and limit covariances of the normalized stage error.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deterministic::{grid_quadrature, FunctionOnGrid, TauGridFunction};
use crate::error::{finite, Error, Result};
use crate::fredholm::{McOptions, StageIterate};
use crate::grid::{gauss_legendre_unit, PointSet};
use crate::problem::{FredholmProblem, VolterraProblem};
use crate::summation::CompensatedSum;
use crate::tau::interpolate;
use crate::volterra::VolterraStageIterate;

/// Eigenvalues below `-PSD_TOLERANCE · trace` trigger clipping.
pub const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceSource {
    /// Sample covariance of the stage summands.
    #[default]
    Empirical,
    /// Covariance of the limiting Gaussian field, from the deterministic iterate.
    Limit,
}

/// Covariance matrix over a set of evaluation points.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    /// Evaluation points; Volterra points are `(τ, y…)`.
    pub points: PointSet,
    matrix: DMatrix<f64>,
    pub source: CovarianceSource,
    /// `max |A - Aᵀ|` before symmetrization.
    pub asymmetry: f64,
    /// Smallest eigenvalue before repair.
    pub min_eigenvalue: f64,
    /// Whether negative eigenvalues were clipped.
    pub repaired: bool,
}

impl CovarianceEstimate {
    /// Symmetrizes `matrix` and clips negative eigenvalues when they exceed
    /// [`PSD_TOLERANCE`] relative to the trace.
    pub fn new(points: PointSet, matrix: DMatrix<f64>, source: CovarianceSource) -> Result<Self> {
        if matrix.nrows() != points.len() || matrix.ncols() != points.len() {
            return Err(Error::invalid("matrix", "shape does not match the points"));
        }
        if let Some(v) = matrix.iter().find(|v| !v.is_finite()) {
            return Err(Error::non_finite("covariance", format!("entry {v}")));
        }
        let (matrix, info) = psd_repair(matrix);
        Ok(Self {
            points,
            matrix,
            source,
            asymmetry: info.asymmetry,
            min_eigenvalue: info.min_eigenvalue,
            repaired: info.repaired,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn max_variance(&self) -> f64 {
        self.matrix.diagonal().iter().copied().fold(0.0, f64::max)
    }

    /// `max_{jk} |A_jk - B_jk|`.
    pub fn max_abs_diff(&self, other: &CovarianceEstimate) -> f64 {
        self.matrix
            .iter()
            .zip(other.matrix.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// The same matrix multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            matrix: &self.matrix * c,
            ..self.clone()
        }
    }
}

/// Diagnostics of [`psd_repair`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepairInfo {
    pub asymmetry: f64,
    pub min_eigenvalue: f64,
    pub repaired: bool,
}

/// Symmetrize, then clip eigenvalues at zero if the most negative one is
/// below `-PSD_TOLERANCE · trace`.
pub fn psd_repair(matrix: DMatrix<f64>) -> (DMatrix<f64>, RepairInfo) {
    let n = matrix.nrows();
    let mut asymmetry: f64 = 0.0;
    let mut sym = matrix.clone();
    for i in 0..n {
        for j in i + 1..n {
            asymmetry = asymmetry.max((matrix[(i, j)] - matrix[(j, i)]).abs());
            let v = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
            sym[(i, j)] = v;
            sym[(j, i)] = v;
        }
    }
    if n == 0 {
        return (
            sym,
            RepairInfo {
                asymmetry,
                min_eigenvalue: 0.0,
                repaired: false,
            },
        );
    }
    let trace = sym.trace().abs();
    let eig = SymmetricEigen::new(sym.clone());
    let min_eigenvalue = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eigenvalue >= -PSD_TOLERANCE * trace {
        return (
            sym,
            RepairInfo {
                asymmetry,
                min_eigenvalue,
                repaired: false,
            },
        );
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let mut repaired = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    for i in 0..n {
        for j in i + 1..n {
            let a = 0.5 * (repaired[(i, j)] + repaired[(j, i)]);
            repaired[(i, j)] = a;
            repaired[(j, i)] = a;
        }
    }
    (
        repaired,
        RepairInfo {
            asymmetry,
            min_eigenvalue,
            repaired: true,
        },
    )
}

/// Covariance of the rows of `data` (`n × d`, row-major) with weights
/// (`None` for `1/n`). Centred at the first row, so constant columns give
/// exact zeros.
fn weighted_covariance(data: &[f64], n: usize, d: usize, weights: Option<&[f64]>) -> DMatrix<f64> {
    let shift: Vec<f64> = data[..d].to_vec();
    let inv_n = 1.0 / n as f64;
    let w = |i: usize| weights.map_or(inv_n, |w| w[i]);
    let means: Vec<f64> = (0..d)
        .map(|j| {
            let mut acc = CompensatedSum::new();
            for i in 0..n {
                acc.add(w(i) * (data[i * d + j] - shift[j]));
            }
            acc.value()
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|j| (j..d).map(move |k| (j, k))).collect();
    let entries: Vec<f64> = pairs
        .par_iter()
        .map(|&(j, k)| {
            let mut acc = CompensatedSum::new();
            for i in 0..n {
                acc.add(w(i) * (data[i * d + j] - shift[j]) * (data[i * d + k] - shift[k]));
            }
            acc.value() - means[j] * means[k]
        })
        .collect();
    let mut m = DMatrix::zeros(d, d);
    for (&(j, k), v) in pairs.iter().zip(entries) {
        m[(j, k)] = v;
        m[(k, j)] = v;
    }
    m
}

/// Empirical covariance of `K(t_j, ξ_i, z_i)` over the draws, on the grid:
/// `N^{-1} Σ_i K(t_1, ξ_i, z_i) K(t_2, ξ_i, z_i) - mean(t_1) mean(t_2)`.
pub fn empirical_covariance(
    problem: &FredholmProblem,
    samples: &PointSet,
    zs: &[f64],
    options: McOptions,
) -> Result<CovarianceEstimate> {
    let n = samples.len();
    if n < 2 || zs.len() != n {
        return Err(Error::invalid(
            "samples",
            "need at least 2 draws with matching values",
        ));
    }
    let grid = problem.grid().points();
    let g = grid.len();
    let kernel = problem.kernel();
    let matrix = match (options.use_factorization, kernel.factorization()) {
        (true, Some(terms)) => {
            // K = A b with A_{jr} = a_r(t_j): Cov = A Cov(b) Aᵀ.
            let r = terms.len();
            let b: Vec<f64> = (0..n)
                .flat_map(|i| {
                    terms
                        .iter()
                        .map(move |term| (term.right)(samples.point(i), zs[i]))
                })
                .collect();
            let cb = weighted_covariance(&b, n, r, None);
            let a = DMatrix::from_fn(g, r, |j, k| (terms[k].left)(grid.point(j)));
            &a * cb * a.transpose()
        }
        _ => {
            let rows: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    grid.iter()
                        .map(|t| kernel.eval(t, samples.point(i), zs[i]))
                        .collect()
                })
                .collect();
            let data: Vec<f64> = rows.into_iter().flatten().collect();
            weighted_covariance(&data, n, g, None)
        }
    };
    CovarianceEstimate::new(grid.clone(), matrix, CovarianceSource::Empirical)
}

/// Empirical covariance for stage `m` from all `N` draws, with
/// `x_{m-1}^{m-1}` re-evaluated at every draw (`prev = None` means `x_0 = f`).
pub fn estimate_covariance(
    problem: &FredholmProblem,
    prev: Option<&StageIterate>,
    all_samples: &PointSet,
    options: McOptions,
) -> Result<CovarianceEstimate> {
    if all_samples.len() < 2 {
        return Err(Error::invalid("samples", "need N >= 2"));
    }
    let zs = match prev {
        Some(p) => p.eval_at(problem, all_samples, options)?,
        None => problem.forcing_on(all_samples)?,
    };
    empirical_covariance(problem, all_samples, &zs, options)
}

/// `R(t_1, t_2) = ∫ K(t_1, s, x(s)) K(t_2, s, x(s)) dμ - ∫K(t_1, ·) dμ ∫K(t_2, ·) dμ`
/// by the grid quadrature, for the deterministic `x = x_{m-1}`.
pub fn limit_covariance(
    problem: &FredholmProblem,
    x_prev: &FunctionOnGrid,
) -> Result<CovarianceEstimate> {
    let grid = problem.grid();
    if x_prev.len() != grid.len() {
        return Err(Error::invalid("x_prev", "length differs from the grid"));
    }
    let (idx, w) = grid_quadrature(problem.measure(), grid)?;
    let g = grid.len();
    let mut data = Vec::with_capacity(idx.len() * g);
    for &l in &idx {
        for t in grid.points().iter() {
            let v = problem.kernel().eval(t, grid.point(l), x_prev.values()[l]);
            data.push(finite(v, "kernel", || format!("node {l}"))?);
        }
    }
    let matrix = weighted_covariance(&data, idx.len(), g, Some(&w));
    CovarianceEstimate::new(grid.points().clone(), matrix, CovarianceSource::Limit)
}

/// τ-node indices used as Volterra band points: about `target` nodes, always
/// including both ends.
pub fn tau_subset(n_tau: usize, target: usize) -> Vec<usize> {
    if target >= n_tau || target < 2 {
        return (0..n_tau).collect();
    }
    let step = (n_tau - 1).div_ceil(target - 1);
    let mut idx: Vec<usize> = (0..n_tau).step_by(step).collect();
    if *idx.last().unwrap() != n_tau - 1 {
        idx.push(n_tau - 1);
    }
    idx
}

/// Points `(τ_a, y_j)` for the given τ-nodes and all grid points, τ-major.
pub fn volterra_points(problem: &VolterraProblem, tau_idx: &[usize]) -> Result<PointSet> {
    let grid = problem.grid().points();
    let mut coords = Vec::with_capacity(tau_idx.len() * grid.len() * (grid.dim() + 1));
    for &a in tau_idx {
        for y in grid.iter() {
            coords.push(problem.tau_grid()[a]);
            coords.extend_from_slice(y);
        }
    }
    PointSet::new(grid.dim() + 1, coords)
}

/// Values of a τ-grid table at [`volterra_points`] order.
pub fn volterra_point_values(table: &TauGridFunction, tau_idx: &[usize]) -> Vec<f64> {
    tau_idx
        .iter()
        .flat_map(|&a| (0..table.n_cols()).map(move |j| table.at(a, j)))
        .collect()
}

/// Empirical covariance of `τ K(τ, y, τη_i, ξ_i, X_{m-1}^{m-1}(τη_i, ξ_i))`
/// over all draws `(η_i, ξ_i)`, at the τ-nodes `tau_idx` times the grid.
pub fn estimate_covariance_volterra(
    problem: &VolterraProblem,
    prev: Option<&VolterraStageIterate>,
    eta: &[f64],
    xi: &PointSet,
    tau_idx: &[usize],
) -> Result<CovarianceEstimate> {
    let n = eta.len();
    if n < 2 || xi.len() != n {
        return Err(Error::invalid(
            "samples",
            "need at least 2 draws with matching values",
        ));
    }
    let tau = problem.tau_grid();
    let scheme = problem.interpolation();
    let (distinct, map) = xi.dedup();
    let prev_table = match prev {
        Some(p) => Some(p.eval_columns(problem, &distinct)?),
        None => None,
    };
    let grid = problem.grid().points();
    let d = tau_idx.len() * grid.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let v = xi.point(i);
            let mut row = Vec::with_capacity(d);
            for &a in tau_idx {
                let ta = tau[a];
                let inner = ta * eta[i];
                let z = match &prev_table {
                    Some(t) => interpolate(tau, t.column(map[i]), inner, scheme),
                    None => problem.forcing_at(inner, v),
                };
                for y in grid.iter() {
                    row.push(ta * problem.kernel_at(ta, y, inner, v, z));
                }
            }
            row
        })
        .collect();
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    let matrix = weighted_covariance(&data, n, d, None);
    CovarianceEstimate::new(
        volterra_points(problem, tau_idx)?,
        matrix,
        CovarianceSource::Empirical,
    )
}

/// Limit covariance for Volterra problems: the `(η, ξ)` covariance of
/// `τ K(τ, y, τη, ξ, X(τη, ξ))` with Gauss-Legendre nodes in `η` and the
/// grid quadrature in `ξ`, for the deterministic `X = X_{m-1}`.
pub fn limit_covariance_volterra(
    problem: &VolterraProblem,
    x_prev: &TauGridFunction,
    tau_idx: &[usize],
) -> Result<CovarianceEstimate> {
    let grid = problem.grid();
    let tau = problem.tau_grid();
    if x_prev.n_tau() != tau.len() || x_prev.n_cols() != grid.len() {
        return Err(Error::invalid(
            "x_prev",
            "table shape does not match the problem grids",
        ));
    }
    let (idx, w) = grid_quadrature(problem.measure(), grid)?;
    let (nu, nu_w) = gauss_legendre_unit(problem.nu_nodes())?;
    let scheme = problem.interpolation();
    let mut data = Vec::new();
    let mut weights = Vec::new();
    for (b, &e) in nu.iter().enumerate() {
        for (k, &l) in idx.iter().enumerate() {
            weights.push(nu_w[b] * w[k]);
            let v = grid.point(l);
            for &a in tau_idx {
                let ta = tau[a];
                let z = interpolate(tau, x_prev.column(l), ta * e, scheme);
                for y in grid.points().iter() {
                    let val = ta * problem.kernel_at(ta, y, ta * e, v, z);
                    data.push(finite(val, "kernel", || format!("tau index {a}"))?);
                }
            }
        }
    }
    let d = tau_idx.len() * grid.len();
    let matrix = weighted_covariance(&data, weights.len(), d, Some(&weights));
    CovarianceEstimate::new(
        volterra_points(problem, tau_idx)?,
        matrix,
        CovarianceSource::Limit,
    )
}
