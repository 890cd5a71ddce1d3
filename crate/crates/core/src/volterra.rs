//! Staged Monte-Carlo recursion for Volterra equations on `[0, 1] × T`.

use rayon::prelude::*;
use serde::Serialize;

use crate::deterministic::TauGridFunction;
use crate::error::{finite, Error, Result};
use crate::grid::{Distance, MetricSpaceGrid, PointSet};
use crate::measure::{sample_measure, MeasureSpec};
use crate::partition::PartitionSchedule;
use crate::problem::VolterraProblem;
use crate::rng::{Channel, Lane, RandomStream};
use crate::summation::CompensatedSum;
use crate::tau::interpolate;

/// Stage `k`:
/// `X_k^k(τ, y) = f(τ, y) + (τ / q(k)) Σ_{i∈Q(k)} K(τ, y, τη_i, ξ_i, X_{k-1}^{k-1}(τη_i, ξ_i))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolterraStageIterate {
    pub stage: usize,
    /// The stage-`k` uniforms `η_i`.
    pub eta: Vec<f64>,
    /// The stage-`k` draws `ξ_i`.
    pub xi: PointSet,
    /// `X_{k-1}^{k-1}(τ_a η_i, ξ_i)`, τ-node major.
    #[serde(skip)]
    inner: Vec<f64>,
    /// Distinct stage-`(k+1)` draws; the columns of `table`.
    pub columns: PointSet,
    /// Column of `table` holding each stage-`(k+1)` draw.
    pub column_of: Vec<usize>,
    /// `X_k^k` on the τ-grid times `columns`; empty for the final stage.
    pub table: TauGridFunction,
    /// `X_k^k` on the τ-grid times the evaluation grid.
    pub grid_table: TauGridFunction,
}

impl VolterraStageIterate {
    /// `X_k^k` on the τ-grid times arbitrary points `ys`.
    pub fn eval_columns(
        &self,
        problem: &VolterraProblem,
        ys: &PointSet,
    ) -> Result<TauGridFunction> {
        let (distinct, map) = ys.dedup();
        let table = stage_table(problem, &self.eta, &self.xi, &self.inner, &distinct)?;
        Ok(TauGridFunction::from_fn(
            table.n_tau(),
            map.len(),
            |a, j| table.at(a, map[j]),
        ))
    }

    /// Value at τ-node `a` of the column used by stage-`(k+1)` draw `i`.
    pub fn value_at_sample(&self, a: usize, i: usize) -> f64 {
        self.table.at(a, self.column_of[i])
    }

    /// `X_k^k(x, ξ_i)` for stage-`(k+1)` draw `i`, interpolated in τ.
    pub fn interpolate_sample(&self, problem: &VolterraProblem, i: usize, x: f64) -> f64 {
        interpolate(
            problem.tau_grid(),
            self.table.column(self.column_of[i]),
            x,
            problem.interpolation(),
        )
    }

    /// Number of stage-`k` draws.
    pub fn q(&self) -> usize {
        self.eta.len()
    }
}

pub fn eta_lane(replication: u32, stage: usize) -> Lane {
    Lane::new(Channel::Eta, replication, stage as u16)
}

/// `(η, ξ)` draws of every stage.
pub fn volterra_draws(
    measure: &MeasureSpec,
    schedule: &PartitionSchedule,
    stream: &RandomStream,
    replication: u32,
) -> Result<Vec<(Vec<f64>, PointSet)>> {
    (1..=schedule.m())
        .map(|k| {
            let q = schedule.q(k);
            let mut eta = vec![0.0; q];
            stream.lane(eta_lane(replication, k)).fill_uniform(&mut eta);
            let xi = sample_measure(measure, q, stream, crate::fredholm::xi_lane(replication, k))?;
            Ok((eta, xi))
        })
        .collect()
}

/// `X_{k-1}^{k-1}(τ_a η_i, ξ_i)` for all τ-nodes and draws; `prev_column(i)`
/// gives the previous stage's τ-column for draw `i` (`None` at stage 1).
pub(crate) fn inner_values<'a>(
    problem: &VolterraProblem,
    eta: &[f64],
    xi: &PointSet,
    prev_column: Option<&(dyn Fn(usize) -> &'a [f64] + Sync)>,
) -> Result<Vec<f64>> {
    let tau = problem.tau_grid();
    let scheme = problem.interpolation();
    let q = eta.len();
    let rows: Vec<Vec<f64>> = tau
        .par_iter()
        .map(|&ta| {
            (0..q)
                .map(|i| {
                    let x = ta * eta[i];
                    match prev_column {
                        None => problem.forcing_at(x, xi.point(i)),
                        Some(col) => interpolate(tau, col(i), x, scheme),
                    }
                })
                .collect()
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    for (n, v) in flat.iter().enumerate() {
        finite(*v, "previous stage", || {
            format!("tau index {}, draw {}", n / q, n % q)
        })?;
    }
    Ok(flat)
}

/// `f(τ_a, y) + (τ_a / q) Σ_i K(τ_a, y, τ_a η_i, ξ_i, z_{a,i})` for each column `y`.
fn stage_table(
    problem: &VolterraProblem,
    eta: &[f64],
    xi: &PointSet,
    inner: &[f64],
    ys: &PointSet,
) -> Result<TauGridFunction> {
    let tau = problem.tau_grid();
    let q = eta.len();
    let rows: Vec<Vec<f64>> = tau
        .par_iter()
        .enumerate()
        .map(|(a, &ta)| {
            let z = &inner[a * q..(a + 1) * q];
            ys.iter()
                .map(|y| {
                    let mut acc = CompensatedSum::new();
                    for i in 0..q {
                        acc.add(problem.kernel_at(ta, y, ta * eta[i], xi.point(i), z[i]));
                    }
                    problem.forcing_at(ta, y) + ta * (acc.value() / q as f64)
                })
                .collect()
        })
        .collect();
    let table = TauGridFunction::from_fn(tau.len(), ys.len(), |a, j| rows[a][j]);
    for j in 0..table.n_cols() {
        for a in 0..table.n_tau() {
            finite(table.at(a, j), "kernel", || {
                format!("tau index {a}, column {j}")
            })?;
        }
    }
    Ok(table)
}

/// Runs stages `1..=m` for one replication and returns every stage.
pub fn mc_solve_volterra(
    problem: &VolterraProblem,
    schedule: &PartitionSchedule,
    stream: &RandomStream,
    replication: u32,
) -> Result<Vec<VolterraStageIterate>> {
    if !schedule.is_budget_consistent() {
        return Err(Error::invalid(
            "schedule",
            format!(
                "stage sizes sum to {}, budget is {}",
                schedule.total(),
                schedule.budget()
            ),
        ));
    }
    if schedule.m() > u16::MAX as usize {
        return Err(Error::invalid("m", "too many stages"));
    }
    let draws = volterra_draws(problem.measure(), schedule, stream, replication)?;
    let mut out: Vec<VolterraStageIterate> = Vec::with_capacity(draws.len());
    for (k, (eta, xi)) in draws.iter().enumerate() {
        let inner = match out.last() {
            None => inner_values(problem, eta, xi, None)?,
            Some(prev) => {
                let col = |i: usize| prev.table.column(prev.column_of[i]);
                inner_values(problem, eta, xi, Some(&col))?
            }
        };
        let (columns, column_of) = match draws.get(k + 1) {
            Some((_, next)) => next.dedup(),
            None => (PointSet::empty(xi.dim()), Vec::new()),
        };
        let table = stage_table(problem, eta, xi, &inner, &columns)?;
        let grid_table = stage_table(problem, eta, xi, &inner, problem.grid().points())?;
        out.push(VolterraStageIterate {
            stage: k + 1,
            eta: eta.clone(),
            xi: xi.clone(),
            inner,
            columns,
            column_of,
            table,
            grid_table,
        });
    }
    Ok(out)
}

/// Path of the scalar Cauchy problem `X' = rhs(τ, X)`, `X(0) = x0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauchyPath {
    pub tau: Vec<f64>,
    pub values: Vec<f64>,
}

impl CauchyPath {
    pub fn at_end(&self) -> f64 {
        *self.values.last().expect("non-empty path")
    }
}

/// Solves `X(τ) = x0 + ∫_0^τ rhs(ν, X(ν)) dν` with the Volterra recursion on a
/// one-point space and returns the final stage on `tau_grid`.
pub fn volterra_cauchy_demo(
    rhs: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    x0: f64,
    schedule: &PartitionSchedule,
    stream: &RandomStream,
    replication: u32,
    tau_grid: Vec<f64>,
) -> Result<CauchyPath> {
    let problem = cauchy_problem(rhs, x0, tau_grid)?;
    let stages = mc_solve_volterra(&problem, schedule, stream, replication)?;
    let last = stages.last().expect("at least one stage");
    Ok(CauchyPath {
        tau: problem.tau_grid().to_vec(),
        values: last.grid_table.column(0).to_vec(),
    })
}

/// The Cauchy problem as a Volterra problem on the point mass at `0`.
///
/// The grid holds the atom and a second dummy point, since grids need two
/// points; the kernel ignores both space arguments. The Lipschitz constant is
/// a placeholder the recursion never reads.
pub fn cauchy_problem(
    rhs: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    x0: f64,
    tau_grid: Vec<f64>,
) -> Result<VolterraProblem> {
    let atom = PointSet::from_scalars(vec![0.0])?;
    let grid = MetricSpaceGrid::from_points(
        PointSet::from_scalars(vec![0.0, 1.0])?,
        vec![1.0, 0.0],
        Distance::Euclidean,
    )?;
    VolterraProblem::new(
        move |_, _| x0,
        move |_, _, nu, _, z| rhs(nu, z),
        1.0,
        MeasureSpec::discrete(atom, vec![1.0])?,
        grid,
        tau_grid,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tau::uniform_tau_grid;

    #[test]
    fn first_stage_of_exponential_is_exact() {
        let schedule = PartitionSchedule::uniform(40, 2).unwrap();
        let p = cauchy_problem(|_, z| z, 1.0, uniform_tau_grid(17).unwrap()).unwrap();
        let it = mc_solve_volterra(&p, &schedule, &RandomStream::new(5), 0).unwrap();
        for (a, &t) in p.tau_grid().iter().enumerate() {
            assert!((it[0].grid_table.at(a, 0) - (1.0 + t)).abs() < 1e-15);
        }
        assert_eq!(it[0].columns.len(), 1);
        assert_eq!(it[1].table.n_cols(), 0);
    }

    #[test]
    fn constant_rhs_gives_identity() {
        let s = PartitionSchedule::uniform(10, 1).unwrap();
        let path = volterra_cauchy_demo(
            |_, _| 1.0,
            0.0,
            &s,
            &RandomStream::new(0),
            0,
            uniform_tau_grid(9).unwrap(),
        )
        .unwrap();
        assert_eq!(path.values, path.tau);
        let s = PartitionSchedule::uniform(30, 3).unwrap();
        let path = volterra_cauchy_demo(
            |_, _| 0.0,
            5.0,
            &s,
            &RandomStream::new(0),
            0,
            uniform_tau_grid(9).unwrap(),
        )
        .unwrap();
        assert!(path.values.iter().all(|v| *v == 5.0));
    }

    #[test]
    fn second_stage_mean_of_eta() {
        let q = 100_000;
        let s = PartitionSchedule::new(vec![10, q], q + 10).unwrap();
        let p = cauchy_problem(|_, z| z, 1.0, uniform_tau_grid(17).unwrap()).unwrap();
        let it = mc_solve_volterra(&p, &s, &RandomStream::new(2), 0).unwrap();
        for (a, &t) in p.tau_grid().iter().enumerate() {
            let expect = 1.0 + t + t * t / 2.0;
            let tol = 3.0 * t * t * (1.0 / 12f64).sqrt() / (q as f64).sqrt() + 1e-12;
            assert!((it[1].grid_table.at(a, 0) - expect).abs() <= tol, "tau {t}");
        }
    }

    #[test]
    fn eval_columns_matches_tables() {
        let s = PartitionSchedule::uniform(60, 3).unwrap();
        let p = cauchy_problem(
            |nu, z| nu.cos() * z.sin(),
            0.5,
            uniform_tau_grid(9).unwrap(),
        )
        .unwrap();
        let it = mc_solve_volterra(&p, &s, &RandomStream::new(9), 1).unwrap();
        let t = it[1].eval_columns(&p, p.grid().points()).unwrap();
        assert_eq!(t, it[1].grid_table);
    }
}
