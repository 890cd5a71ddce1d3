//! Metric-entropy diagnostic for the Gaussian limit.

use serde::Serialize;

use crate::deterministic::{grid_quadrature, FunctionOnGrid};
use crate::error::{finite, Error, Result};
use crate::problem::FredholmProblem;

/// Smallest grid for which covering numbers are considered informative.
pub const MIN_RESOLUTION: usize = 16;

/// Number of dyadic scales `ε = 1, 1/2, …, 2^{-(SCALES-1)}`.
const SCALES: usize = 31;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyDiagnostic {
    pub p: f64,
    /// `d_p(t_i, t_j)` on the grid, row-major.
    pub distances: Vec<Vec<f64>>,
    /// Scales, decreasing from 1.
    pub epsilons: Vec<f64>,
    /// Greedy covering counts `N(T, d_p, ε)`, non-increasing in `ε`.
    pub covering_counts: Vec<usize>,
    /// Step-sum estimate of `∫_0^1 N(ε)^{1/p} dε`.
    pub integral_estimate: f64,
    /// Too few points, or the count reaches the grid size at a coarse scale.
    pub insufficient_resolution: bool,
    pub caveat: &'static str,
}

/// `d_p(t_1, t_2) = (∫ |K(t_1, s, x(s)) - K(t_2, s, x(s))|^p dμ(s))^{1/p}` on
/// the grid, greedy covering numbers over dyadic `ε`, and the entropy integral.
pub fn entropy_diagnostic(
    problem: &FredholmProblem,
    x_prev: &FunctionOnGrid,
    p: f64,
) -> Result<EntropyDiagnostic> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::invalid("p", format!("{p} must be at least 2")));
    }
    let grid = problem.grid();
    if x_prev.len() != grid.len() {
        return Err(Error::invalid("x_prev", "length differs from the grid"));
    }
    let g = grid.len();
    let (idx, w) = grid_quadrature(problem.measure(), grid)?;
    let k: Vec<Vec<f64>> = grid
        .points()
        .iter()
        .map(|t| {
            idx.iter()
                .map(|&l| {
                    finite(
                        problem.kernel().eval(t, grid.point(l), x_prev.values()[l]),
                        "kernel",
                        || format!("node {l}"),
                    )
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut distances = vec![vec![0.0; g]; g];
    for i in 0..g {
        for j in i + 1..g {
            let s: f64 = (0..idx.len())
                .map(|l| w[l] * (k[i][l] - k[j][l]).abs().powf(p))
                .sum();
            let d = s.powf(1.0 / p);
            distances[i][j] = d;
            distances[j][i] = d;
        }
    }
    let epsilons: Vec<f64> = (0..SCALES).map(|e| 0.5f64.powi(e as i32)).collect();
    let mut covering_counts: Vec<usize> = epsilons
        .iter()
        .map(|&eps| greedy_cover(&distances, eps))
        .collect();
    for e in 1..covering_counts.len() {
        covering_counts[e] = covering_counts[e].max(covering_counts[e - 1]);
    }
    // Upper step sum over [ε_{e+1}, ε_e] plus [0, ε_last].
    let mut integral_estimate = 0.0;
    for e in 0..SCALES {
        let lower = if e + 1 < SCALES { epsilons[e + 1] } else { 0.0 };
        let n = covering_counts
            .get(e + 1)
            .copied()
            .unwrap_or(covering_counts[e]);
        integral_estimate += (n as f64).powf(1.0 / p) * (epsilons[e] - lower);
    }
    let diameter = distances.iter().flatten().copied().fold(0.0, f64::max);
    let saturated = epsilons
        .iter()
        .zip(&covering_counts)
        .any(|(&eps, &n)| n == g && eps >= diameter / 8.0 && diameter > 0.0);
    Ok(EntropyDiagnostic {
        p,
        distances,
        epsilons,
        covering_counts,
        integral_estimate,
        insufficient_resolution: g < MIN_RESOLUTION || saturated,
        caveat: "covering numbers of a finite grid are lower bounds for those of T",
    })
}

/// Centres chosen greedily in index order; each covers points within `eps`.
fn greedy_cover(d: &[Vec<f64>], eps: f64) -> usize {
    let n = d.len();
    let mut covered = vec![false; n];
    let mut count = 0;
    for c in 0..n {
        if covered[c] {
            continue;
        }
        count += 1;
        for j in 0..n {
            if d[c][j] <= eps {
                covered[j] = true;
            }
        }
    }
    count
}
