//! Replication experiments: convergence rate and band coverage.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deterministic::{
    apriori_error_bound, picard_solve, sup_distance, volterra_solve, volterra_tail_bound,
};
use crate::error::{Error, Result};
use crate::fredholm::{mc_solve_fredholm, McOptions};
use crate::grid::PointSet;
use crate::inference::band::ConfidenceBand;
use crate::inference::covariance::{
    estimate_covariance, estimate_covariance_volterra, limit_covariance, limit_covariance_volterra,
    tau_subset, volterra_point_values, volterra_points, CovarianceEstimate, CovarianceSource,
};
use crate::inference::gaussian::{check_level, gaussian_sup_quantile, DEFAULT_N_SIM};
use crate::partition::{PartitionSchedule, ScheduleKind};
use crate::problem::{FredholmProblem, VolterraProblem};
use crate::rng::{Channel, Lane, RandomStream};
use crate::volterra::mc_solve_volterra;

/// Either kind of equation.
#[derive(Debug, Clone, Copy)]
pub enum StudyProblem<'a> {
    Fredholm(&'a FredholmProblem),
    Volterra(&'a VolterraProblem),
}

/// How bands are built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandOptions {
    pub level: f64,
    pub n_sim: usize,
    pub covariance: CovarianceSource,
    /// Approximate number of τ-nodes carrying Volterra band points.
    pub tau_points: usize,
}

impl Default for BandOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            n_sim: DEFAULT_N_SIM,
            covariance: CovarianceSource::Empirical,
            tau_points: 17,
        }
    }
}

/// Deterministic iterate `x_m` at the band points, with the pieces needed
/// for the limit covariance and the a-priori widening.
struct Target {
    points: PointSet,
    tau_idx: Vec<usize>,
    values: Vec<f64>,
    limit: Option<CovarianceEstimate>,
    widening: f64,
}

fn target(
    problem: StudyProblem<'_>,
    m: usize,
    tau_points: usize,
    with_limit: bool,
) -> Result<Target> {
    match problem {
        StudyProblem::Fredholm(p) => {
            let it = picard_solve(p, m)?;
            let delta0 = it[1].sup_distance(&it[0]);
            Ok(Target {
                points: p.grid().points().clone(),
                tau_idx: Vec::new(),
                values: it[m].values().to_vec(),
                limit: if with_limit {
                    Some(limit_covariance(p, &it[m - 1])?)
                } else {
                    None
                },
                widening: apriori_error_bound(p.rho(), delta0, m)?,
            })
        }
        StudyProblem::Volterra(p) => {
            let it = volterra_solve(p, m)?;
            let tau_idx = tau_subset(p.tau_grid().len(), tau_points);
            let delta0 = it[1].sup_distance(&it[0]);
            Ok(Target {
                points: volterra_points(p, &tau_idx)?,
                values: volterra_point_values(&it[m], &tau_idx),
                limit: if with_limit {
                    Some(limit_covariance_volterra(p, &it[m - 1], &tau_idx)?)
                } else {
                    None
                },
                widening: volterra_tail_bound(p.lipschitz(), delta0, m)?,
                tau_idx,
            })
        }
    }
}

/// One Monte-Carlo replication at the band points.
struct Run {
    values: Vec<f64>,
    q_m: usize,
    covariance: Option<CovarianceEstimate>,
}

fn run(
    problem: StudyProblem<'_>,
    schedule: &PartitionSchedule,
    stream: &RandomStream,
    replication: u32,
    tau_idx: &[usize],
    empirical: bool,
) -> Result<Run> {
    let m = schedule.m();
    match problem {
        StudyProblem::Fredholm(p) => {
            let stages = mc_solve_fredholm(p, schedule, stream, replication)?;
            let covariance = if empirical {
                let all = concat(stages.iter().map(|s| &s.samples))?;
                let prev = if m >= 2 { Some(&stages[m - 2]) } else { None };
                Some(estimate_covariance(p, prev, &all, McOptions::default())?)
            } else {
                None
            };
            Ok(Run {
                values: stages[m - 1].grid_values.clone(),
                q_m: schedule.q(m),
                covariance,
            })
        }
        StudyProblem::Volterra(p) => {
            let stages = mc_solve_volterra(p, schedule, stream, replication)?;
            let covariance = if empirical {
                let eta: Vec<f64> = stages.iter().flat_map(|s| s.eta.iter().copied()).collect();
                let xi = concat(stages.iter().map(|s| &s.xi))?;
                let prev = if m >= 2 { Some(&stages[m - 2]) } else { None };
                Some(estimate_covariance_volterra(p, prev, &eta, &xi, tau_idx)?)
            } else {
                None
            };
            Ok(Run {
                values: volterra_point_values(&stages[m - 1].grid_table, tau_idx),
                q_m: schedule.q(m),
                covariance,
            })
        }
    }
}

fn concat<'a>(sets: impl Iterator<Item = &'a PointSet>) -> Result<PointSet> {
    let mut dim = 1;
    let mut coords = Vec::new();
    for s in sets {
        dim = s.dim();
        coords.extend_from_slice(s.coords());
    }
    PointSet::new(dim, coords)
}

/// Band of a single replication next to the deterministic iterate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandRun {
    pub points: PointSet,
    pub mc_values: Vec<f64>,
    pub det_values: Vec<f64>,
    pub band: ConfidenceBand,
    /// A-priori bound on `‖x - x_m‖`, for widening towards the exact solution.
    pub apriori_widening: f64,
    pub covariance: CovarianceSource,
}

pub fn band_run(
    problem: StudyProblem<'_>,
    schedule: &PartitionSchedule,
    stream: &RandomStream,
    replication: u32,
    options: &BandOptions,
) -> Result<BandRun> {
    check_level(options.level)?;
    let limit = options.covariance == CovarianceSource::Limit;
    let t = target(problem, schedule.m(), options.tau_points, limit)?;
    let r = run(problem, schedule, stream, replication, &t.tau_idx, !limit)?;
    let cov = if limit {
        t.limit.as_ref()
    } else {
        r.covariance.as_ref()
    }
    .expect("covariance requested");
    let u = gaussian_sup_quantile(
        cov,
        options.level,
        options.n_sim,
        stream,
        Lane::new(Channel::Gauss, replication, 0),
    )?;
    Ok(BandRun {
        points: t.points,
        band: ConfidenceBand::from_quantile(r.values.clone(), u, r.q_m, options.level)?,
        mc_values: r.values,
        det_values: t.values,
        apriori_widening: t.widening,
        covariance: options.covariance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub budget: usize,
    pub q: Vec<usize>,
    pub median_sup_error: f64,
    pub mean_sup_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateStudy {
    pub m: usize,
    pub schedule: ScheduleKind,
    pub replications: usize,
    pub seed: u64,
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `ln(median error)` against `ln N`.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares line `y = a + b x`, returned as `(b, a)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    (b, my - b * mx)
}

/// Median sup-error of `x_m^m` against `x_m` for each budget, and the fitted
/// log-log slope. Budget `b` uses replication indices `b · R .. (b + 1) · R`.
pub fn rate_study(
    problem: StudyProblem<'_>,
    m: usize,
    budgets: &[usize],
    schedule: ScheduleKind,
    replications: usize,
    stream: &RandomStream,
) -> Result<RateStudy> {
    if budgets.len() < 4 || budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("N", "need at least 4 increasing budgets"));
    }
    if replications < 20 {
        return Err(Error::invalid("replications", "need at least 20"));
    }
    if m == 0 {
        return Err(Error::invalid("m", "must be at least 1"));
    }
    let t = target(problem, m, usize::MAX, false)?;
    let mut rows = Vec::with_capacity(budgets.len());
    for (b, &n) in budgets.iter().enumerate() {
        let s = schedule.build(n, m)?;
        let errors = (0..replications)
            .into_par_iter()
            .map(|r| {
                let rep = (b * replications + r) as u32;
                let run = run(problem, &s, stream, rep, &t.tau_idx, false)?;
                Ok(sup_distance(&run.values, &t.values))
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        rows.push(RateRow {
            budget: n,
            q: s.sizes().to_vec(),
            median_sup_error: median(errors),
            mean_sup_error: mean,
        });
    }
    let (slope, intercept, note) = if rows
        .iter()
        .any(|r| r.median_sup_error.partial_cmp(&1e-300) != Some(std::cmp::Ordering::Greater))
    {
        (
            None,
            None,
            Some("errors vanish (zero-variance case); slope undefined".to_string()),
        )
    } else {
        let x: Vec<f64> = rows.iter().map(|r| (r.budget as f64).ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.median_sup_error.ln()).collect();
        let (b, a) = fit_line(&x, &y);
        (Some(b), Some(a), None)
    };
    Ok(RateStudy {
        m,
        schedule,
        replications,
        seed: stream.seed(),
        rows,
        slope,
        intercept,
        note,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageStudy {
    pub m: usize,
    pub budget: usize,
    pub q: Vec<usize>,
    pub level: f64,
    pub replications: usize,
    pub seed: u64,
    pub covariance: CovarianceSource,
    /// Fraction of replications whose band contains `x_m` at every point.
    pub coverage: f64,
    /// Same for the reference solution after widening by `apriori_widening`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_coverage: Option<f64>,
    pub apriori_widening: f64,
    pub mean_halfwidth: f64,
}

/// Replicated band coverage of `x_m` (and optionally of a reference solution,
/// given at the band points, after widening).
pub fn coverage_study(
    problem: StudyProblem<'_>,
    schedule: &PartitionSchedule,
    replications: usize,
    stream: &RandomStream,
    options: &BandOptions,
    reference: Option<&[f64]>,
) -> Result<CoverageStudy> {
    check_level(options.level)?;
    if replications < 100 {
        return Err(Error::invalid("replications", "need at least 100"));
    }
    let m = schedule.m();
    let limit = options.covariance == CovarianceSource::Limit;
    let t = target(problem, m, options.tau_points, limit)?;
    if reference.is_some_and(|r| r.len() != t.values.len()) {
        return Err(Error::invalid(
            "reference",
            "length differs from the band points",
        ));
    }
    let fixed_u = match &t.limit {
        Some(cov) => Some(gaussian_sup_quantile(
            cov,
            options.level,
            options.n_sim,
            stream,
            Lane::new(Channel::Gauss, 0, 0),
        )?),
        None => None,
    };
    let outcomes = (0..replications)
        .into_par_iter()
        .map(|r| {
            let rep = r as u32;
            let run = run(problem, schedule, stream, rep, &t.tau_idx, !limit)?;
            let u = match (fixed_u, &run.covariance) {
                (Some(u), _) => u,
                (None, Some(cov)) => gaussian_sup_quantile(
                    cov,
                    options.level,
                    options.n_sim,
                    stream,
                    Lane::new(Channel::Gauss, rep, 0),
                )?,
                (None, None) => unreachable!("covariance requested"),
            };
            let band = ConfidenceBand::from_quantile(run.values, u, run.q_m, options.level)?;
            Ok((
                band.covers(&t.values),
                reference.map(|x| band.covers_with(x, t.widening)),
                band.halfwidth,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = replications as f64;
    Ok(CoverageStudy {
        m,
        budget: schedule.budget(),
        q: schedule.sizes().to_vec(),
        level: options.level,
        replications,
        seed: stream.seed(),
        covariance: options.covariance,
        coverage: outcomes.iter().filter(|o| o.0).count() as f64 / n,
        reference_coverage: reference
            .map(|_| outcomes.iter().filter(|o| o.1 == Some(true)).count() as f64 / n),
        apriori_widening: t.widening,
        mean_halfwidth: outcomes.iter().map(|o| o.2).sum::<f64>() / n,
    })
}

/// Band points of a problem: the grid, or τ-nodes times the grid.
pub fn band_points(problem: StudyProblem<'_>, tau_points: usize) -> Result<PointSet> {
    match problem {
        StudyProblem::Fredholm(p) => Ok(p.grid().points().clone()),
        StudyProblem::Volterra(p) => {
            volterra_points(p, &tau_subset(p.tau_grid().len(), tau_points))
        }
    }
}
