//! Staged dependent-trials Monte-Carlo recursion for Fredholm equations.

use serde::Serialize;

use crate::deterministic::FunctionOnGrid;
use crate::error::{finite, Error, Result};
use crate::grid::{MetricSpaceGrid, PointSet};
use crate::measure::{sample_measure, MeasureSpec};
use crate::partition::PartitionSchedule;
use crate::problem::{FredholmProblem, Kernel};
use crate::rng::{Channel, Lane, RandomStream};
use crate::summation::CompensatedSum;

/// Evaluation switches that do not change the estimator, only how it is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McOptions {
    /// Use the kernel's separable factorization when it has one.
    pub use_factorization: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            use_factorization: true,
        }
    }
}

/// Stage `k` of the recursion.
///
/// `x_k^k(t) = f(t) + q(k)^{-1} Σ_{i∈Q(k)} K(t, ξ_i, x_{k-1}^{k-1}(ξ_i))`
/// is fully determined by `samples` and `inputs`; the stored tables are its
/// values at the next stage's draws and on the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageIterate {
    pub stage: usize,
    /// The stage-`k` draws `ξ_i`.
    pub samples: PointSet,
    /// `x_{k-1}^{k-1}(ξ_i)` for each stage-`k` draw.
    pub inputs: Vec<f64>,
    /// `x_k^k` at the stage-`(k+1)` draws; empty for the final stage.
    pub sample_values: Vec<f64>,
    /// `x_k^k` on the evaluation grid.
    pub grid_values: Vec<f64>,
}

impl StageIterate {
    /// `x_k^k` at arbitrary points.
    pub fn eval_at(
        &self,
        problem: &FredholmProblem,
        points: &PointSet,
        options: McOptions,
    ) -> Result<Vec<f64>> {
        stage_values(problem, points, &self.samples, &self.inputs, options)
    }

    pub fn grid_function(&self) -> FunctionOnGrid {
        FunctionOnGrid::new(self.grid_values.clone())
    }
}

/// Lane of the stage-`k` draws of `ξ` in `replication`.
pub fn xi_lane(replication: u32, stage: usize) -> Lane {
    Lane::new(Channel::Xi, replication, stage as u16)
}

fn check_schedule(schedule: &PartitionSchedule) -> Result<()> {
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
    Ok(())
}

/// Draws of every stage, `ξ(1..N)` in stage order.
pub fn stage_draws(
    measure: &MeasureSpec,
    schedule: &PartitionSchedule,
    stream: &RandomStream,
    replication: u32,
) -> Result<Vec<PointSet>> {
    (1..=schedule.m())
        .map(|k| sample_measure(measure, schedule.q(k), stream, xi_lane(replication, k)))
        .collect()
}

/// `f(t) + q^{-1} Σ_i K(t, ξ_i, z_i)` at each target, evaluating repeated
/// targets once.
fn stage_values(
    problem: &FredholmProblem,
    targets: &PointSet,
    samples: &PointSet,
    inputs: &[f64],
    options: McOptions,
) -> Result<Vec<f64>> {
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    let eval = |pts: &PointSet| -> Result<Vec<f64>> {
        let sums =
            problem
                .kernel()
                .weighted_sum(pts, samples, inputs, None, options.use_factorization)?;
        let f = problem.forcing_on(pts)?;
        Ok(f.iter().zip(&sums).map(|(a, b)| a + b).collect())
    };
    if problem.measure().is_discrete() {
        let (distinct, map) = targets.dedup();
        let values = eval(&distinct)?;
        Ok(map.iter().map(|&j| values[j]).collect())
    } else {
        eval(targets)
    }
}

/// Runs stages `1..=m` for one replication and returns every stage.
pub fn mc_solve_fredholm(
    problem: &FredholmProblem,
    schedule: &PartitionSchedule,
    stream: &RandomStream,
    replication: u32,
) -> Result<Vec<StageIterate>> {
    mc_solve_fredholm_with(problem, schedule, stream, replication, McOptions::default())
}

pub fn mc_solve_fredholm_with(
    problem: &FredholmProblem,
    schedule: &PartitionSchedule,
    stream: &RandomStream,
    replication: u32,
    options: McOptions,
) -> Result<Vec<StageIterate>> {
    check_schedule(schedule)?;
    let mut draws = stage_draws(problem.measure(), schedule, stream, replication)?.into_iter();
    let mut samples = draws.next().expect("at least one stage");
    let mut inputs = problem.forcing_on(&samples)?;
    let m = schedule.m();
    let mut out = Vec::with_capacity(m);
    for k in 1..=m {
        let next = draws.next();
        let sample_values = match &next {
            Some(pts) => stage_values(problem, pts, &samples, &inputs, options)?,
            None => Vec::new(),
        };
        let grid_values =
            stage_values(problem, problem.grid().points(), &samples, &inputs, options)?;
        let stage = StageIterate {
            stage: k,
            samples,
            inputs,
            sample_values,
            grid_values,
        };
        match next {
            Some(pts) => {
                samples = pts;
                inputs = stage.sample_values.clone();
            }
            None => {
                samples = PointSet::empty(1);
                inputs = Vec::new();
            }
        }
        out.push(stage);
    }
    Ok(out)
}

/// Dependent-trials estimate `I_N(t) = N^{-1} Σ_i g(t, ξ_i)` on the grid, with
/// the same draws `ξ_1, …, ξ_N ~ μ` for every `t`.
pub fn depending_trials_integral(
    g: impl Fn(&[f64], &[f64]) -> f64 + Sync,
    grid: &MetricSpaceGrid,
    measure: &MeasureSpec,
    n: usize,
    stream: &RandomStream,
) -> Result<FunctionOnGrid> {
    let draws = sample_measure(measure, n, stream, Lane::new(Channel::Xi, 0, 0))?;
    let values = grid
        .points()
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let mut acc = CompensatedSum::new();
            for s in draws.iter() {
                acc.add(g(t, s));
            }
            finite(acc.value() / n as f64, "integrand", || {
                format!("grid point {j}")
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(FunctionOnGrid::new(values))
}

/// Same kernel without its factorization, for cross-checking the fast path.
pub fn without_factorization(problem: &FredholmProblem) -> Result<FredholmProblem> {
    let k = problem.kernel().clone();
    problem.with_kernel(Kernel::new(move |t, s, z| k.eval(t, s, z)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec};

    fn problem(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, k: Kernel) -> FredholmProblem {
        let grid = build_grid(&GridSpec::new(1, 11)).unwrap();
        FredholmProblem::new(f, k, 0.5, MeasureSpec::UniformCube { dim: 1 }, grid).unwrap()
    }

    #[test]
    fn s_independent_linear_kernel_is_exact() {
        let p = problem(|_| 1.0, Kernel::new(|_, _, z| 0.5 * z));
        for seed in 0..5 {
            let schedule = PartitionSchedule::uniform(100, 2).unwrap();
            let it = mc_solve_fredholm(&p, &schedule, &RandomStream::new(seed), 0).unwrap();
            assert!(it[0].sample_values.iter().all(|v| *v == 1.5));
            assert!(it[1].grid_values.iter().all(|v| *v == 1.75));
            assert_eq!(it[1].sample_values.len(), 0);
            assert_eq!(it[0].sample_values.len(), 50);
        }
    }

    #[test]
    fn zero_kernel_returns_forcing() {
        let p = problem(|t| t[0] * t[0], Kernel::new(|_, _, _| 0.0));
        let schedule = PartitionSchedule::uniform(30, 3).unwrap();
        let it = mc_solve_fredholm(&p, &schedule, &RandomStream::new(1), 0).unwrap();
        for stage in &it {
            for (j, t) in p.grid().points().iter().enumerate() {
                assert_eq!(stage.grid_values[j], t[0] * t[0]);
            }
        }
    }

    #[test]
    fn rejects_inconsistent_schedule() {
        let p = problem(|_| 1.0, Kernel::new(|_, _, z| 0.5 * z));
        let s = PartitionSchedule::new(vec![5, 26, 968], 1_000_000).unwrap();
        assert!(mc_solve_fredholm(&p, &s, &RandomStream::new(0), 0).is_err());
    }

    #[test]
    fn eval_at_reproduces_tables() {
        let p = problem(
            |t| t[0],
            Kernel::new(|t, s, z| 0.3 * (t[0] - s[0]).cos() * z.sin()),
        );
        let schedule = PartitionSchedule::uniform(60, 3).unwrap();
        let it = mc_solve_fredholm(&p, &schedule, &RandomStream::new(3), 2).unwrap();
        let g = it[2]
            .eval_at(&p, p.grid().points(), McOptions::default())
            .unwrap();
        assert_eq!(g, it[2].grid_values);
        let next = it[1]
            .eval_at(&p, &it[2].samples, McOptions::default())
            .unwrap();
        assert_eq!(next, it[1].sample_values);
        assert_eq!(it[2].inputs, it[1].sample_values);
    }

    #[test]
    fn trials_integral_without_s_dependence_is_exact() {
        let grid = build_grid(&GridSpec::new(1, 5)).unwrap();
        let m = MeasureSpec::UniformCube { dim: 1 };
        let r =
            depending_trials_integral(|t, _| t[0], &grid, &m, 17, &RandomStream::new(4)).unwrap();
        assert_eq!(r.values(), grid.points().coords());
    }

    #[test]
    fn trials_integral_mean() {
        let grid = build_grid(&GridSpec::new(1, 5)).unwrap();
        let m = MeasureSpec::UniformCube { dim: 1 };
        let n = 100_000;
        let r = depending_trials_integral(|t, s| t[0] + s[0], &grid, &m, n, &RandomStream::new(8))
            .unwrap();
        let tol = 3.0 * (1.0 / 12f64).sqrt() / (n as f64).sqrt();
        for (v, t) in r.values().iter().zip(grid.points().coords()) {
            assert!((v - (t + 0.5)).abs() <= tol);
        }
    }
}
