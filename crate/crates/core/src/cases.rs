//! Registry of equations with known solutions.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{
    build_grid, gauss_legendre_unit, Distance, GridRule, GridSpec, MetricSpaceGrid, PointSet,
};
use crate::measure::MeasureSpec;
use crate::problem::{
    FredholmProblem, Kernel, PointFn, SeparableTerm, VolterraForcingFn, VolterraProblem,
};
use crate::summation::CompensatedSum;
use crate::tau::uniform_tau_grid;

/// Registered case ids.
pub const CASE_IDS: [&str; 4] = ["fred-lin-const", "fred-smooth", "volt-exp", "volt-smooth"];

/// Largest allowed sup-residual of a reference solution.
pub const REFERENCE_RESIDUAL_TOL: f64 = 1e-8;

/// Default number of τ-nodes for the Volterra cases.
pub const DEFAULT_TAU_NODES: usize = 65;

#[derive(Clone, Debug)]
pub enum CaseProblem {
    Fredholm(FredholmProblem),
    Volterra(VolterraProblem),
}

#[derive(Clone)]
pub enum Reference {
    Fredholm(PointFn),
    Volterra(VolterraForcingFn),
}

impl std::fmt::Debug for Reference {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Reference::Fredholm(_) => f.write_str("Fredholm(..)"),
            Reference::Volterra(_) => f.write_str("Volterra(..)"),
        }
    }
}

/// An equation together with its exact solution.
#[derive(Clone, Debug)]
pub struct ManufacturedCase {
    pub id: &'static str,
    pub description: &'static str,
    pub problem: CaseProblem,
    pub reference: Reference,
}

impl ManufacturedCase {
    pub fn fredholm(&self) -> Option<&FredholmProblem> {
        match &self.problem {
            CaseProblem::Fredholm(p) => Some(p),
            CaseProblem::Volterra(_) => None,
        }
    }

    pub fn volterra(&self) -> Option<&VolterraProblem> {
        match &self.problem {
            CaseProblem::Volterra(p) => Some(p),
            CaseProblem::Fredholm(_) => None,
        }
    }

    /// Reference at a point of `T` (Fredholm cases).
    pub fn reference_at(&self, t: &[f64]) -> Option<f64> {
        match &self.reference {
            Reference::Fredholm(x) => Some(x(t)),
            Reference::Volterra(_) => None,
        }
    }

    /// Reference at `(τ, y)` (Volterra cases).
    pub fn reference_at_tau(&self, tau: f64, y: &[f64]) -> Option<f64> {
        match &self.reference {
            Reference::Volterra(x) => Some(x(tau, y)),
            Reference::Fredholm(_) => None,
        }
    }

    /// Sup over the evaluation grid of `|x* - f - ∫K(·, s, x*(s)) dμ(s)|`, with
    /// quadrature at four times the grid resolution.
    pub fn reference_residual(&self) -> Result<f64> {
        match (&self.problem, &self.reference) {
            (CaseProblem::Fredholm(p), Reference::Fredholm(x)) => fredholm_residual(p, x),
            (CaseProblem::Volterra(p), Reference::Volterra(x)) => volterra_residual(p, x),
            _ => Err(Error::Undefined(
                "reference kind does not match the problem".into(),
            )),
        }
    }
}

/// `(nodes, weights)` for `μ`, refined four times relative to the grid where applicable.
fn refined_quadrature(
    measure: &MeasureSpec,
    grid: &MetricSpaceGrid,
) -> Result<(PointSet, Vec<f64>)> {
    match measure {
        MeasureSpec::UniformCube { dim } => {
            let spec = match grid.spec() {
                Some(s) => s.refined(4),
                None => GridSpec::new(*dim, 4 * grid.len()).with_rule(GridRule::GaussLegendre),
            };
            let fine = build_grid(&spec)?;
            Ok((fine.points().clone(), fine.weights().to_vec()))
        }
        MeasureSpec::Discrete { atoms, weights } => Ok((atoms.clone(), weights.clone())),
        MeasureSpec::InverseCdf(q) => {
            let (u, w) = gauss_legendre_unit(4 * grid.len())?;
            Ok((
                PointSet::from_scalars(u.iter().map(|&u| q(u)).collect())?,
                w,
            ))
        }
    }
}

fn fredholm_residual(p: &FredholmProblem, x: &PointFn) -> Result<f64> {
    let (nodes, w) = refined_quadrature(p.measure(), p.grid())?;
    let zs: Vec<f64> = nodes.iter().map(|s| x(s)).collect();
    let integral = p
        .kernel()
        .weighted_sum(p.grid().points(), &nodes, &zs, Some(&w), false)?;
    Ok(p.grid()
        .points()
        .iter()
        .zip(&integral)
        .map(|(t, i)| (x(t) - p.forcing_at(t) - i).abs())
        .fold(0.0, f64::max))
}

fn volterra_residual(p: &VolterraProblem, x: &VolterraForcingFn) -> Result<f64> {
    let (nodes, w) = refined_quadrature(p.measure(), p.grid())?;
    let (nu, nu_w) = gauss_legendre_unit(4 * p.nu_nodes())?;
    let mut worst: f64 = 0.0;
    for &tau in p.tau_grid() {
        for y in p.grid().points().iter() {
            let mut acc = CompensatedSum::new();
            for (b, &v) in nu.iter().enumerate() {
                for (l, s) in nodes.iter().enumerate() {
                    let inner = tau * v;
                    acc.add(nu_w[b] * w[l] * p.kernel_at(tau, y, inner, s, x(inner, s)));
                }
            }
            worst = worst.max((x(tau, y) - p.forcing_at(tau, y) - tau * acc.value()).abs());
        }
    }
    Ok(worst)
}

/// Number of Taylor terms of `cos(u)` that are exact in double precision for `|u| ≤ 1`.
const COS_TERMS: usize = 11;

/// `cos(ts) = Σ_j (-1)^j t^{2j} s^{2j} / (2j)!` as separable terms times `c · sin z`.
fn cos_sin_terms(c: f64) -> Vec<SeparableTerm> {
    let mut fact = 1.0;
    (0..COS_TERMS)
        .map(|j| {
            if j > 0 {
                fact *= ((2 * j - 1) * 2 * j) as f64;
            }
            let coef = if j % 2 == 0 { 1.0 / fact } else { -1.0 / fact };
            let p = 2 * j as i32;
            SeparableTerm::new(
                move |t| coef * t[0].powi(p),
                move |s, z| c * s[0].powi(p) * z.sin(),
            )
        })
        .collect()
}

fn fred_lin_const() -> Result<ManufacturedCase> {
    let grid = build_grid(&GridSpec::new(1, 11))?;
    let kernel = Kernel::new(|_, _, z| 0.5 * z)
        .with_factorization(vec![SeparableTerm::new(|_| 1.0, |_, z| 0.5 * z)]);
    let problem = FredholmProblem::new(
        |_| 1.0,
        kernel,
        0.5,
        MeasureSpec::UniformCube { dim: 1 },
        grid,
    )?;
    Ok(ManufacturedCase {
        id: "fred-lin-const",
        description: "f = 1, K = 0.5 z on [0, 1]; solution x = 2",
        problem: CaseProblem::Fredholm(problem),
        reference: Reference::Fredholm(Arc::new(|_| 2.0)),
    })
}

fn fred_smooth() -> Result<ManufacturedCase> {
    let grid = build_grid(&GridSpec::new(1, 16).with_rule(GridRule::GaussLegendre))?;
    let kernel = Kernel::new(|t, s, z| 0.4 * (t[0] * s[0]).cos() * z.sin())
        .with_factorization(cos_sin_terms(0.4));
    // ∫_0^1 cos(ts) sin(πs) ds = π (1 + cos t) / (π² - t²).
    let forcing = |t: &[f64]| PI * t[0] - 0.4 * PI * (1.0 + t[0].cos()) / (PI * PI - t[0] * t[0]);
    let problem = FredholmProblem::new(
        forcing,
        kernel,
        0.4,
        MeasureSpec::UniformCube { dim: 1 },
        grid,
    )?;
    Ok(ManufacturedCase {
        id: "fred-smooth",
        description: "K = 0.4 cos(ts) sin z on [0, 1], Gauss-Legendre grid; solution x = πt",
        problem: CaseProblem::Fredholm(problem),
        reference: Reference::Fredholm(Arc::new(|t| PI * t[0])),
    })
}

/// Three atoms `{0, 1/2, 1}` serving as both grid and measure support.
fn three_atoms(weights: [f64; 3]) -> Result<(MetricSpaceGrid, MeasureSpec)> {
    let atoms = PointSet::from_scalars(vec![0.0, 0.5, 1.0])?;
    let grid = MetricSpaceGrid::from_points(atoms.clone(), weights.to_vec(), Distance::Euclidean)?;
    Ok((grid, MeasureSpec::discrete(atoms, weights.to_vec())?))
}

fn volt_exp() -> Result<ManufacturedCase> {
    let (grid, measure) = three_atoms([1.0 / 3.0, 1.0 / 3.0, 1.0 - 2.0 / 3.0])?;
    let problem = VolterraProblem::new(
        |_, _| 1.0,
        |_, _, _, _, z| z,
        1.0,
        measure,
        grid,
        uniform_tau_grid(DEFAULT_TAU_NODES)?,
    )?;
    Ok(ManufacturedCase {
        id: "volt-exp",
        description: "K = z, f = 1; solution X = e^τ",
        problem: CaseProblem::Volterra(problem),
        reference: Reference::Volterra(Arc::new(|tau, _| tau.exp())),
    })
}

fn volt_smooth() -> Result<ManufacturedCase> {
    const ATOMS: [f64; 3] = [0.0, 0.5, 1.0];
    const W: [f64; 3] = [0.25, 0.5, 0.25];
    let (grid, measure) = three_atoms(W)?;
    // ∫_0^τ sin(ν(1 + v)) dν = (1 - cos(τ(1 + v))) / (1 + v).
    let forcing = |tau: f64, y: &[f64]| {
        let mut acc = CompensatedSum::new();
        for (v, w) in ATOMS.iter().zip(W) {
            acc.add(w * 0.5 * (y[0] * v).cos() * (1.0 - (tau * (1.0 + v)).cos()) / (1.0 + v));
        }
        tau * (1.0 + y[0]) - acc.value()
    };
    let kernel = |_: f64, y: &[f64], _: f64, v: &[f64], z: f64| 0.5 * (y[0] * v[0]).cos() * z.sin();
    let problem = VolterraProblem::new(
        forcing,
        kernel,
        0.5,
        measure,
        grid,
        uniform_tau_grid(DEFAULT_TAU_NODES)?,
    )?;
    Ok(ManufacturedCase {
        id: "volt-smooth",
        description: "K = 0.5 cos(yv) sin z on three weighted atoms; solution X = τ(1 + y)",
        problem: CaseProblem::Volterra(problem),
        reference: Reference::Volterra(Arc::new(|tau, y| tau * (1.0 + y[0]))),
    })
}

/// Looks up a registered case and checks its reference residual.
pub fn manufactured_case(id: &str) -> Result<ManufacturedCase> {
    let case = match id {
        "fred-lin-const" => fred_lin_const(),
        "fred-smooth" => fred_smooth(),
        "volt-exp" => volt_exp(),
        "volt-smooth" => volt_smooth(),
        _ => return Err(Error::UnknownCase(id.to_string())),
    }?;
    let r = case.reference_residual()?;
    if r.is_nan() || r >= REFERENCE_RESIDUAL_TOL {
        return Err(Error::Undefined(format!(
            "case {id}: reference residual {r:e}"
        )));
    }
    Ok(case)
}
