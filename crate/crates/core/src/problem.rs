//! Integral-equation problems and their kernels.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{finite, Error, Result};
use crate::grid::{MetricSpaceGrid, PointSet};
use crate::measure::{MeasureSampler, MeasureSpec};
use crate::rng::{Channel, Lane, RandomStream};
use crate::summation::CompensatedSum;
use crate::tau::{validate_tau_grid, TauInterpolation};

/// Function of a point of `T`.
pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Fredholm kernel `K(t, s, z)`.
pub type FredholmKernelFn = Arc<dyn Fn(&[f64], &[f64], f64) -> f64 + Send + Sync>;
/// Factor `b(s, z)` of a separable kernel term.
pub type SampleFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
/// Volterra forcing `f(τ, y)`.
pub type VolterraForcingFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
/// Volterra kernel `K(τ, y, ν, v, z)`, where `ν ∈ [0, τ]` is the inner time.
pub type VolterraKernelFn = Arc<dyn Fn(f64, &[f64], f64, &[f64], f64) -> f64 + Send + Sync>;

/// One term `a(t) b(s, z)` of a separable kernel.
#[derive(Clone)]
pub struct SeparableTerm {
    pub left: PointFn,
    pub right: SampleFn,
}

impl SeparableTerm {
    pub fn new(
        left: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        right: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            left: Arc::new(left),
            right: Arc::new(right),
        }
    }
}

/// Fredholm kernel, optionally with a factorization `K = Σ_r a_r(t) b_r(s, z)`.
///
/// When a factorization is present the Monte-Carlo sums cost `O(rank · q)` per
/// stage instead of `O(points · q)`. The factorization must agree with the
/// direct closure to rounding.
#[derive(Clone)]
pub struct Kernel {
    direct: FredholmKernelFn,
    factors: Option<Arc<[SeparableTerm]>>,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("rank", &self.factors.as_ref().map(|t| t.len()))
            .finish()
    }
}

impl Kernel {
    pub fn new(k: impl Fn(&[f64], &[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            direct: Arc::new(k),
            factors: None,
        }
    }

    /// Kernel defined entirely by its separable terms.
    pub fn separable(terms: Vec<SeparableTerm>) -> Self {
        let terms: Arc<[SeparableTerm]> = terms.into();
        let shared = terms.clone();
        let direct: FredholmKernelFn = Arc::new(move |t, s, z| {
            let mut acc = CompensatedSum::new();
            for term in shared.iter() {
                acc.add((term.left)(t) * (term.right)(s, z));
            }
            acc.value()
        });
        Self {
            direct,
            factors: Some(terms),
        }
    }

    /// Attaches a factorization to a directly defined kernel.
    pub fn with_factorization(mut self, terms: Vec<SeparableTerm>) -> Self {
        self.factors = Some(terms.into());
        self
    }

    #[inline]
    pub fn eval(&self, t: &[f64], s: &[f64], z: f64) -> f64 {
        (self.direct)(t, s, z)
    }

    pub fn factorization(&self) -> Option<&[SeparableTerm]> {
        self.factors.as_deref()
    }

    /// `out_j = Σ_i w_i K(t_j, s_i, z_i)`, or the plain mean when `weights` is
    /// `None`. Uses the factorization when present and `allow_factored`.
    pub fn weighted_sum(
        &self,
        targets: &PointSet,
        samples: &PointSet,
        zs: &[f64],
        weights: Option<&[f64]>,
        allow_factored: bool,
    ) -> Result<Vec<f64>> {
        if samples.len() != zs.len() || weights.is_some_and(|w| w.len() != zs.len()) {
            return Err(Error::invalid(
                "samples",
                "lengths of samples, values and weights differ",
            ));
        }
        if samples.is_empty() {
            return Err(Error::invalid("samples", "empty sample"));
        }
        let n = zs.len() as f64;
        let out: Vec<f64> = match (allow_factored, self.factorization()) {
            (true, Some(terms)) => {
                let sums = factor_sums(terms, samples, zs, weights);
                targets
                    .iter()
                    .map(|t| {
                        let mut acc = CompensatedSum::new();
                        for (term, b) in terms.iter().zip(&sums) {
                            acc.add((term.left)(t) * b);
                        }
                        match weights {
                            Some(_) => acc.value(),
                            None => acc.value() / n,
                        }
                    })
                    .collect()
            }
            _ => {
                let idx: Vec<usize> = (0..targets.len()).collect();
                idx.par_iter()
                    .map(|&j| {
                        let t = targets.point(j);
                        let mut acc = CompensatedSum::new();
                        match weights {
                            Some(w) => {
                                for (i, s) in samples.iter().enumerate() {
                                    acc.add(w[i] * self.eval(t, s, zs[i]));
                                }
                                acc.value()
                            }
                            None => {
                                for (i, s) in samples.iter().enumerate() {
                                    acc.add(self.eval(t, s, zs[i]));
                                }
                                acc.value() / n
                            }
                        }
                    })
                    .collect()
            }
        };
        for (j, v) in out.iter().enumerate() {
            finite(*v, "kernel", || format!("target {j}"))?;
        }
        Ok(out)
    }
}

const FACTOR_CHUNK: usize = 4096;

/// `Σ_i w_i b_r(s_i, z_i)` for each term, in fixed-size chunks merged in order.
fn factor_sums(
    terms: &[SeparableTerm],
    samples: &PointSet,
    zs: &[f64],
    weights: Option<&[f64]>,
) -> Vec<f64> {
    let rank = terms.len();
    let n = zs.len();
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(FACTOR_CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * FACTOR_CHUNK;
            let hi = (lo + FACTOR_CHUNK).min(n);
            let mut acc = vec![CompensatedSum::new(); rank];
            for i in lo..hi {
                let s = samples.point(i);
                let w = weights.map_or(1.0, |w| w[i]);
                for (a, term) in acc.iter_mut().zip(terms) {
                    a.add(w * (term.right)(s, zs[i]));
                }
            }
            acc.iter().map(|a| a.value()).collect()
        })
        .collect();
    let mut total = vec![CompensatedSum::new(); rank];
    for chunk in &chunks {
        for (t, v) in total.iter_mut().zip(chunk) {
            t.add(*v);
        }
    }
    total.iter().map(|t| t.value()).collect()
}

/// `x(t) = f(t) + ∫ K(t, s, x(s)) dμ(s)` on a finite grid.
#[derive(Clone, Debug)]
pub struct FredholmProblem {
    forcing: PointFnDebug,
    kernel: Kernel,
    rho: f64,
    measure: MeasureSpec,
    grid: MetricSpaceGrid,
}

#[derive(Clone)]
struct PointFnDebug(PointFn);

impl fmt::Debug for PointFnDebug {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Fn")
    }
}

impl FredholmProblem {
    /// `rho` is the Lipschitz constant of `K` in `z`; it must lie in `(0, 1)`.
    pub fn new(
        forcing: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        kernel: Kernel,
        rho: f64,
        measure: MeasureSpec,
        grid: MetricSpaceGrid,
    ) -> Result<Self> {
        Self::from_parts(Arc::new(forcing), kernel, rho, measure, grid)
    }

    fn from_parts(
        forcing: PointFn,
        kernel: Kernel,
        rho: f64,
        measure: MeasureSpec,
        grid: MetricSpaceGrid,
    ) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0 && rho < 1.0) {
            return Err(Error::invalid("rho", format!("{rho} is not in (0, 1)")));
        }
        measure.validate()?;
        if measure.dim() != grid.dim() {
            return Err(Error::invalid(
                "measure",
                format!(
                    "dimension {} differs from grid dimension {}",
                    measure.dim(),
                    grid.dim()
                ),
            ));
        }
        let problem = Self {
            forcing: PointFnDebug(forcing),
            kernel,
            rho,
            measure,
            grid,
        };
        problem.forcing_on(problem.grid.points())?;
        Ok(problem)
    }

    /// Same equation evaluated on another grid.
    pub fn with_grid(&self, grid: MetricSpaceGrid) -> Result<Self> {
        Self::from_parts(
            self.forcing.0.clone(),
            self.kernel.clone(),
            self.rho,
            self.measure.clone(),
            grid,
        )
    }

    /// Same equation with another kernel (for example without its factorization).
    pub fn with_kernel(&self, kernel: Kernel) -> Result<Self> {
        Self::from_parts(
            self.forcing.0.clone(),
            kernel,
            self.rho,
            self.measure.clone(),
            self.grid.clone(),
        )
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn measure(&self) -> &MeasureSpec {
        &self.measure
    }

    pub fn grid(&self) -> &MetricSpaceGrid {
        &self.grid
    }

    #[inline]
    pub fn forcing_at(&self, t: &[f64]) -> f64 {
        (self.forcing.0)(t)
    }

    pub fn forcing_on(&self, points: &PointSet) -> Result<Vec<f64>> {
        points
            .iter()
            .enumerate()
            .map(|(i, t)| finite(self.forcing_at(t), "forcing", || format!("point {i}")))
            .collect()
    }

    /// Sup of `|f|` over the grid.
    pub fn forcing_sup(&self) -> f64 {
        self.grid
            .points()
            .iter()
            .map(|t| self.forcing_at(t).abs())
            .fold(0.0, f64::max)
    }
}

/// `X(τ, y) = f(τ, y) + τ ∫_0^1 dν ∫_T K(τ, y, τν, v, X(τν, v)) dμ(v)` for `τ ∈ [0, 1]`.
#[derive(Clone, Debug)]
pub struct VolterraProblem {
    forcing: VolterraForcingDebug,
    kernel: VolterraKernelDebug,
    lipschitz: f64,
    measure: MeasureSpec,
    grid: MetricSpaceGrid,
    tau_grid: Vec<f64>,
    interpolation: TauInterpolation,
    nu_nodes: usize,
}

#[derive(Clone)]
struct VolterraForcingDebug(VolterraForcingFn);
#[derive(Clone)]
struct VolterraKernelDebug(VolterraKernelFn);

impl fmt::Debug for VolterraForcingDebug {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Fn")
    }
}

impl fmt::Debug for VolterraKernelDebug {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Fn")
    }
}

/// Default number of Gauss-Legendre nodes for the inner time integral.
pub const DEFAULT_NU_NODES: usize = 24;

impl VolterraProblem {
    pub fn new(
        forcing: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        kernel: impl Fn(f64, &[f64], f64, &[f64], f64) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
        measure: MeasureSpec,
        grid: MetricSpaceGrid,
        tau_grid: Vec<f64>,
    ) -> Result<Self> {
        Self::from_parts(
            Arc::new(forcing),
            Arc::new(kernel),
            lipschitz,
            measure,
            grid,
            tau_grid,
            TauInterpolation::Cubic,
            DEFAULT_NU_NODES,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn from_parts(
        forcing: VolterraForcingFn,
        kernel: VolterraKernelFn,
        lipschitz: f64,
        measure: MeasureSpec,
        grid: MetricSpaceGrid,
        tau_grid: Vec<f64>,
        interpolation: TauInterpolation,
        nu_nodes: usize,
    ) -> Result<Self> {
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(Error::invalid(
                "lipschitz",
                format!("{lipschitz} must be finite and positive"),
            ));
        }
        measure.validate()?;
        if measure.dim() != grid.dim() {
            return Err(Error::invalid(
                "measure",
                format!(
                    "dimension {} differs from grid dimension {}",
                    measure.dim(),
                    grid.dim()
                ),
            ));
        }
        validate_tau_grid(&tau_grid, interpolation)?;
        if nu_nodes == 0 {
            return Err(Error::invalid("nu_nodes", "must be positive"));
        }
        let problem = Self {
            forcing: VolterraForcingDebug(forcing),
            kernel: VolterraKernelDebug(kernel),
            lipschitz,
            measure,
            grid,
            tau_grid,
            interpolation,
            nu_nodes,
        };
        for (a, &tau) in problem.tau_grid.iter().enumerate() {
            for (j, y) in problem.grid.points().iter().enumerate() {
                finite(problem.forcing_at(tau, y), "forcing", || {
                    format!("tau index {a}, point {j}")
                })?;
            }
        }
        Ok(problem)
    }

    pub fn with_tau_grid(&self, tau_grid: Vec<f64>) -> Result<Self> {
        Self::from_parts(
            self.forcing.0.clone(),
            self.kernel.0.clone(),
            self.lipschitz,
            self.measure.clone(),
            self.grid.clone(),
            tau_grid,
            self.interpolation,
            self.nu_nodes,
        )
    }

    pub fn with_interpolation(&self, interpolation: TauInterpolation) -> Result<Self> {
        Self::from_parts(
            self.forcing.0.clone(),
            self.kernel.0.clone(),
            self.lipschitz,
            self.measure.clone(),
            self.grid.clone(),
            self.tau_grid.clone(),
            interpolation,
            self.nu_nodes,
        )
    }

    pub fn with_nu_nodes(&self, nu_nodes: usize) -> Result<Self> {
        Self::from_parts(
            self.forcing.0.clone(),
            self.kernel.0.clone(),
            self.lipschitz,
            self.measure.clone(),
            self.grid.clone(),
            self.tau_grid.clone(),
            self.interpolation,
            nu_nodes,
        )
    }

    #[inline]
    pub fn forcing_at(&self, tau: f64, y: &[f64]) -> f64 {
        (self.forcing.0)(tau, y)
    }

    #[inline]
    pub fn kernel_at(&self, tau: f64, y: &[f64], nu: f64, v: &[f64], z: f64) -> f64 {
        (self.kernel.0)(tau, y, nu, v, z)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn measure(&self) -> &MeasureSpec {
        &self.measure
    }

    pub fn grid(&self) -> &MetricSpaceGrid {
        &self.grid
    }

    pub fn tau_grid(&self) -> &[f64] {
        &self.tau_grid
    }

    pub fn interpolation(&self) -> TauInterpolation {
        self.interpolation
    }

    pub fn nu_nodes(&self) -> usize {
        self.nu_nodes
    }

    /// Sup of `|f|` over the τ-grid times the grid.
    pub fn forcing_sup(&self) -> f64 {
        let mut s: f64 = 0.0;
        for &tau in &self.tau_grid {
            for y in self.grid.points().iter() {
                s = s.max(self.forcing_at(tau, y).abs());
            }
        }
        s
    }
}

/// Range of `z` explored by [`probe_lipschitz`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZRange {
    pub lo: f64,
    pub hi: f64,
}

/// Problems whose kernel can be probed at random arguments.
pub trait KernelProbe {
    /// Calls `visit` with a closure `z ↦ K(args, z)` for random admissible
    /// arguments drawn from `rng`.
    fn random_section(
        &self,
        rng: &mut crate::rng::LaneRng,
        sampler: &mut MeasureSampler<'_>,
    ) -> Box<dyn Fn(f64) -> f64 + '_>;

    fn probe_measure(&self) -> &MeasureSpec;

    /// Radius `S` of the default range `[-S, S]` given `sup |K(·, 0)|`.
    fn default_radius(&self, kernel_at_zero: f64) -> f64;
}

impl KernelProbe for FredholmProblem {
    fn random_section(
        &self,
        rng: &mut crate::rng::LaneRng,
        sampler: &mut MeasureSampler<'_>,
    ) -> Box<dyn Fn(f64) -> f64 + '_> {
        let j = ((rng.next_uniform() * self.grid.len() as f64) as usize).min(self.grid.len() - 1);
        let mut s = Vec::with_capacity(self.grid.dim());
        sampler.draw(rng, &mut s);
        let t = self.grid.point(j);
        Box::new(move |z| self.kernel.eval(t, &s, z))
    }

    fn probe_measure(&self) -> &MeasureSpec {
        &self.measure
    }

    fn default_radius(&self, kernel_at_zero: f64) -> f64 {
        (self.forcing_sup() + kernel_at_zero) / (1.0 - self.rho)
    }
}

impl KernelProbe for VolterraProblem {
    fn random_section(
        &self,
        rng: &mut crate::rng::LaneRng,
        sampler: &mut MeasureSampler<'_>,
    ) -> Box<dyn Fn(f64) -> f64 + '_> {
        let tau = rng.next_uniform();
        let nu = tau * rng.next_uniform();
        let j = ((rng.next_uniform() * self.grid.len() as f64) as usize).min(self.grid.len() - 1);
        let mut v = Vec::with_capacity(self.grid.dim());
        sampler.draw(rng, &mut v);
        let y = self.grid.point(j);
        Box::new(move |z| self.kernel_at(tau, y, nu, &v, z))
    }

    fn probe_measure(&self) -> &MeasureSpec {
        &self.measure
    }

    fn default_radius(&self, kernel_at_zero: f64) -> f64 {
        (self.forcing_sup() + kernel_at_zero) * self.lipschitz.exp()
    }
}

/// Empirical lower estimate of the Lipschitz constant of `K` in `z`.
///
/// Half of the probes compare two independent points of the range, the other
/// half compare a point with a neighbour at a log-uniform relative distance in
/// `[1e-4, 1]`, which finds local slopes. Without `range` the probes use
/// `[-S, S]`, with `S` an a-priori bound on the solution.
pub fn probe_lipschitz<P: KernelProbe>(
    problem: &P,
    n_probes: usize,
    stream: &RandomStream,
    range: Option<ZRange>,
) -> Result<f64> {
    if n_probes == 0 {
        return Err(Error::invalid("n_probes", "must be positive"));
    }
    let mut sampler = MeasureSampler::new(problem.probe_measure());
    let range = match range {
        Some(r) => {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo < r.hi) {
                return Err(Error::invalid("range", "needs finite lo < hi"));
            }
            r
        }
        None => {
            let mut rng = stream.lane(Lane::new(Channel::Probe, 0, 1));
            let mut k0: f64 = 0.0;
            for _ in 0..n_probes.min(1000) {
                let section = problem.random_section(&mut rng, &mut sampler);
                k0 = k0.max(section(0.0).abs());
            }
            let s = problem.default_radius(k0);
            if !s.is_finite() {
                return Err(Error::non_finite("probe range", "a-priori bound"));
            }
            let s = s.max(1.0);
            ZRange { lo: -s, hi: s }
        }
    };
    let width = range.hi - range.lo;
    let mut rng = stream.lane(Lane::new(Channel::Probe, 0, 0));
    let mut best: f64 = 0.0;
    for i in 0..n_probes {
        let section = problem.random_section(&mut rng, &mut sampler);
        let z1 = range.lo + width * rng.next_uniform();
        let z2 = if i % 2 == 0 {
            range.lo + width * rng.next_uniform()
        } else {
            let step = width * 10f64.powf(-4.0 * rng.next_uniform());
            let sign = if rng.next_uniform() < 0.5 { -1.0 } else { 1.0 };
            let z2 = z1 + sign * step;
            if z2 < range.lo || z2 > range.hi {
                z1 - sign * step
            } else {
                z2
            }
        };
        if z1 == z2 {
            continue;
        }
        let dk = section(z1) - section(z2);
        let ratio = dk.abs() / (z1 - z2).abs();
        if !ratio.is_finite() {
            return Err(Error::non_finite("kernel", format!("probe {i}")));
        }
        best = best.max(ratio);
    }
    Ok(best)
}
