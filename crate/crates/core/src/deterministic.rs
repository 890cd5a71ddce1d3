//! Deterministic successive approximations on a grid.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{finite, Error, Result};
use crate::grid::{gauss_legendre_unit, MetricSpaceGrid};
use crate::measure::MeasureSpec;
use crate::problem::{FredholmProblem, VolterraProblem};
use crate::summation::CompensatedSum;
use crate::tau::interpolate;

/// Values of a function at the points of a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionOnGrid {
    values: Vec<f64>,
}

impl FunctionOnGrid {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_distance(&self, other: &FunctionOnGrid) -> f64 {
        sup_distance(&self.values, &other.values)
    }
}

/// `max_i |a_i - b_i|`.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Quadrature for `μ` whose nodes are grid points: `(grid indices, weights)`.
///
/// Lebesgue measure on the cube uses the grid's own weights; a discrete measure
/// must have its atoms among the grid points.
pub(crate) fn grid_quadrature(
    measure: &MeasureSpec,
    grid: &MetricSpaceGrid,
) -> Result<(Vec<usize>, Vec<f64>)> {
    match measure {
        MeasureSpec::UniformCube { .. } => Ok(((0..grid.len()).collect(), grid.weights().to_vec())),
        MeasureSpec::Discrete { atoms, weights } => {
            let mut idx = Vec::with_capacity(atoms.len());
            for (a, atom) in atoms.iter().enumerate() {
                let j = (0..grid.len())
                    .find(|&j| grid.point(j) == atom)
                    .ok_or_else(|| {
                        Error::invalid("measure", format!("atom {a} is not a grid point"))
                    })?;
                idx.push(j);
            }
            Ok((idx, weights.clone()))
        }
        MeasureSpec::InverseCdf(_) => Err(Error::Undefined(
            "deterministic iteration needs a measure supported on the grid".into(),
        )),
    }
}

/// One step `x ↦ f + ∫ K(·, s, x(s)) dμ(s)` with the grid quadrature.
pub fn picard_step(problem: &FredholmProblem, x: &FunctionOnGrid) -> Result<FunctionOnGrid> {
    let grid = problem.grid();
    if x.len() != grid.len() {
        return Err(Error::invalid(
            "x",
            format!("{} values for {} grid points", x.len(), grid.len()),
        ));
    }
    let (idx, w) = grid_quadrature(problem.measure(), grid)?;
    let nodes = grid.points().select(&idx);
    let zs: Vec<f64> = idx.iter().map(|&i| x.values[i]).collect();
    let integral = problem
        .kernel()
        .weighted_sum(grid.points(), &nodes, &zs, Some(&w), false)?;
    let f = problem.forcing_on(grid.points())?;
    Ok(FunctionOnGrid::new(
        f.iter().zip(&integral).map(|(a, b)| a + b).collect(),
    ))
}

/// Iterates `x_0 = f, x_{k+1} = picard_step(x_k)` and returns `x_0, …, x_m`.
pub fn picard_solve(problem: &FredholmProblem, m: usize) -> Result<Vec<FunctionOnGrid>> {
    let x0 = FunctionOnGrid::new(problem.forcing_on(problem.grid().points())?);
    picard_solve_from(problem, x0, m)
}

pub fn picard_solve_from(
    problem: &FredholmProblem,
    x0: FunctionOnGrid,
    m: usize,
) -> Result<Vec<FunctionOnGrid>> {
    let mut out = Vec::with_capacity(m + 1);
    out.push(x0);
    for _ in 0..m {
        let next = picard_step(problem, out.last().unwrap())?;
        out.push(next);
    }
    Ok(out)
}

/// `δ₀ ρ^m / (1 - ρ)`, the a-priori distance from `x_m` to the fixed point.
pub fn apriori_error_bound(rho: f64, delta0: f64, m: usize) -> Result<f64> {
    if !(rho.is_finite() && rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid("rho", format!("{rho} is not in (0, 1)")));
    }
    if !(delta0.is_finite() && delta0 >= 0.0) {
        return Err(Error::invalid("delta0", "must be finite and non-negative"));
    }
    Ok(delta0 * rho.powi(m as i32) / (1.0 - rho))
}

/// Values on the τ-grid times a set of columns, stored column by column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauGridFunction {
    n_tau: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl TauGridFunction {
    pub fn zeros(n_tau: usize, n_cols: usize) -> Self {
        Self {
            n_tau,
            n_cols,
            data: vec![0.0; n_tau * n_cols],
        }
    }

    pub fn from_fn(n_tau: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_tau * n_cols);
        for j in 0..n_cols {
            for a in 0..n_tau {
                data.push(f(a, j));
            }
        }
        Self {
            n_tau,
            n_cols,
            data,
        }
    }

    pub fn n_tau(&self) -> usize {
        self.n_tau
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn at(&self, a: usize, j: usize) -> f64 {
        self.data[j * self.n_tau + a]
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_tau..(j + 1) * self.n_tau]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn sup_distance(&self, other: &TauGridFunction) -> f64 {
        sup_distance(&self.data, &other.data)
    }
}

/// `f` tabulated on the τ-grid times the grid.
pub fn volterra_forcing_table(problem: &VolterraProblem) -> Result<TauGridFunction> {
    let tau = problem.tau_grid();
    let grid = problem.grid();
    let table = TauGridFunction::from_fn(tau.len(), grid.len(), |a, j| {
        problem.forcing_at(tau[a], grid.point(j))
    });
    check_table(&table, "forcing")?;
    Ok(table)
}

fn check_table(t: &TauGridFunction, what: &'static str) -> Result<()> {
    for j in 0..t.n_cols {
        for a in 0..t.n_tau {
            finite(t.at(a, j), what, || format!("tau index {a}, column {j}"))?;
        }
    }
    Ok(())
}

/// One step of the Volterra successive approximation on the τ-grid.
///
/// The inner time integral uses Gauss-Legendre nodes in `ν ∈ [0, 1]`; values
/// of the previous iterate between τ-nodes are interpolated.
pub fn volterra_step(problem: &VolterraProblem, x: &TauGridFunction) -> Result<TauGridFunction> {
    let tau = problem.tau_grid();
    let grid = problem.grid();
    if x.n_tau != tau.len() || x.n_cols != grid.len() {
        return Err(Error::invalid(
            "x",
            "table shape does not match the problem grids",
        ));
    }
    let (idx, w) = grid_quadrature(problem.measure(), grid)?;
    let (nu, nu_w) = gauss_legendre_unit(problem.nu_nodes())?;
    let scheme = problem.interpolation();
    let rows: Vec<Vec<f64>> = (0..tau.len())
        .into_par_iter()
        .map(|a| {
            let ta = tau[a];
            // Inner values do not depend on the output point y.
            let z: Vec<f64> = nu
                .iter()
                .flat_map(|&v| idx.iter().map(move |&l| (v, l)))
                .map(|(v, l)| interpolate(tau, x.column(l), ta * v, scheme))
                .collect();
            (0..grid.len())
                .map(|j| {
                    let y = grid.point(j);
                    let mut acc = CompensatedSum::new();
                    for (b, &v) in nu.iter().enumerate() {
                        for (k, &l) in idx.iter().enumerate() {
                            let zz = z[b * idx.len() + k];
                            acc.add(
                                nu_w[b]
                                    * w[k]
                                    * problem.kernel_at(ta, y, ta * v, grid.point(l), zz),
                            );
                        }
                    }
                    problem.forcing_at(ta, y) + ta * acc.value()
                })
                .collect()
        })
        .collect();
    let table = TauGridFunction::from_fn(tau.len(), grid.len(), |a, j| rows[a][j]);
    check_table(&table, "volterra step")?;
    Ok(table)
}

/// Iterates from `X_0 = f` and returns `X_0, …, X_m`.
pub fn volterra_solve(problem: &VolterraProblem, m: usize) -> Result<Vec<TauGridFunction>> {
    let mut out = Vec::with_capacity(m + 1);
    out.push(volterra_forcing_table(problem)?);
    for _ in 0..m {
        let next = volterra_step(problem, out.last().unwrap())?;
        out.push(next);
    }
    Ok(out)
}

/// `Σ_{k≥0} z^k / (k + shift)!`, i.e. the Mittag-Leffler function `E_{1, shift+1}(z)`.
pub fn mittag_leffler_e1(shift: usize, z: f64) -> f64 {
    let mut term = 1.0;
    for k in 1..=shift {
        term /= k as f64;
    }
    let mut acc = CompensatedSum::new();
    let mut k = 0usize;
    loop {
        acc.add(term);
        k += 1;
        term *= z / (k + shift) as f64;
        if term.abs() <= 1e-17 * acc.value().abs() || k > 10_000 {
            break;
        }
    }
    acc.value()
}

/// `δ₀ Σ_{n≥m} C^n / n! = δ₀ C^m E_{1, m+1}(C)`, the distance from `X_m` to the solution.
pub fn volterra_tail_bound(lipschitz: f64, delta0: f64, m: usize) -> Result<f64> {
    if !(lipschitz.is_finite() && lipschitz >= 0.0) {
        return Err(Error::invalid(
            "lipschitz",
            "must be finite and non-negative",
        ));
    }
    if !(delta0.is_finite() && delta0 >= 0.0) {
        return Err(Error::invalid("delta0", "must be finite and non-negative"));
    }
    if lipschitz == 0.0 {
        return Ok(if m == 0 { delta0 } else { 0.0 });
    }
    Ok(delta0 * lipschitz.powi(m as i32) * mittag_leffler_e1(m, lipschitz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec, PointSet};
    use crate::problem::Kernel;
    use crate::tau::uniform_tau_grid;

    #[test]
    fn linear_constant_problem_converges_geometrically() {
        let grid = build_grid(&GridSpec::new(1, 5)).unwrap();
        let p = FredholmProblem::new(
            |_| 1.0,
            Kernel::new(|_, _, z| 0.5 * z),
            0.5,
            MeasureSpec::UniformCube { dim: 1 },
            grid,
        )
        .unwrap();
        let it = picard_solve(&p, 10).unwrap();
        for (k, x) in it.iter().enumerate() {
            for v in x.values() {
                assert_eq!(*v, 2.0 - 0.5f64.powi(k as i32));
            }
        }
    }

    #[test]
    fn tail_bound_matches_exponential_remainder() {
        let e = std::f64::consts::E;
        let mut partial = 0.0;
        let mut fact = 1.0;
        for m in 0..15 {
            let b = volterra_tail_bound(1.0, 1.0, m).unwrap();
            assert!((b - (e - partial)).abs() < 1e-15, "m = {m}");
            if m > 0 {
                fact *= m as f64;
            }
            partial += 1.0 / fact;
        }
        assert_eq!(volterra_tail_bound(0.0, 2.0, 0).unwrap(), 2.0);
        assert_eq!(volterra_tail_bound(0.0, 2.0, 3).unwrap(), 0.0);
        assert!((mittag_leffler_e1(0, 2.0) - 2f64.exp()).abs() < 1e-14);
        assert!((volterra_tail_bound(1.0, 1.0, 3).unwrap() - 0.2182818).abs() < 1e-7);
        assert!((volterra_tail_bound(2.0, 1.0, 4).unwrap() - 1.0557228).abs() < 1e-7);
    }

    #[test]
    fn apriori_bound_values() {
        assert_eq!(apriori_error_bound(0.5, 1.0, 3).unwrap(), 0.25);
        assert_eq!(apriori_error_bound(0.5, 1.0, 1).unwrap(), 1.0);
        assert!((apriori_error_bound(0.9, 2.0, 5).unwrap() - 11.8098).abs() < 1e-12);
        assert!(apriori_error_bound(1.0, 0.5, 3).is_err());
        assert!(apriori_error_bound(0.0, 0.5, 3).is_err());
    }

    #[test]
    fn volterra_exponential_iterates_are_taylor_sums() {
        let atoms = PointSet::from_scalars(vec![0.0, 1.0]).unwrap();
        let grid = crate::grid::MetricSpaceGrid::from_points(
            atoms.clone(),
            vec![0.5, 0.5],
            Default::default(),
        )
        .unwrap();
        let measure = MeasureSpec::discrete(atoms, vec![0.5, 0.5]).unwrap();
        let p = VolterraProblem::new(
            |_, _| 1.0,
            |_, _, _, _, z| z,
            1.0,
            measure,
            grid,
            uniform_tau_grid(129).unwrap(),
        )
        .unwrap();
        let it = volterra_solve(&p, 6).unwrap();
        for (n, x) in it.iter().enumerate() {
            for (a, &t) in p.tau_grid().iter().enumerate() {
                let mut s = 0.0;
                let mut term = 1.0;
                for k in 0..=n {
                    if k > 0 {
                        term *= t / k as f64;
                    }
                    s += term;
                }
                assert!((x.at(a, 1) - s).abs() < 1e-9, "n = {n}");
            }
        }
    }
}
