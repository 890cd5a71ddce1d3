//! Allocation of a sample budget `N` across the `m` stages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stage sizes `q(1), …, q(m)` with the budget they were derived from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionSchedule {
    budget: usize,
    q: Vec<usize>,
}

impl PartitionSchedule {
    /// Schedule from explicit sizes. Sizes must be positive; their sum may
    /// differ from `budget` (see [`PartitionSchedule::is_budget_consistent`]).
    pub fn new(q: Vec<usize>, budget: usize) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::invalid("m", "must be at least 1"));
        }
        if let Some(k) = q.iter().position(|&v| v == 0) {
            return Err(Error::Infeasible(format!("stage {} has no samples", k + 1)));
        }
        Ok(Self { budget, q })
    }

    /// Sizes summing to their own total.
    pub fn from_sizes(q: Vec<usize>) -> Result<Self> {
        let budget = q.iter().sum();
        Self::new(q, budget)
    }

    /// `⌊N/m⌋` per stage, the remainder added to the last stage.
    pub fn uniform(budget: usize, m: usize) -> Result<Self> {
        check_budget(budget, m)?;
        let base = budget / m;
        let mut q = vec![base; m];
        q[m - 1] += budget - base * m;
        Self::new(q, budget)
    }

    pub fn m(&self) -> usize {
        self.q.len()
    }

    /// `q(k)` for `k = 1, …, m`.
    pub fn q(&self, k: usize) -> usize {
        self.q[k - 1]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.q
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn total(&self) -> usize {
        self.q.iter().sum()
    }

    pub fn is_budget_consistent(&self) -> bool {
        self.total() == self.budget
    }

    /// Cumulative sample counts `n(k) = q(1) + … + q(k)`.
    pub fn cumulative(&self) -> Vec<usize> {
        self.q
            .iter()
            .scan(0, |acc, q| {
                *acc += q;
                Some(*acc)
            })
            .collect()
    }

    /// Fractions `γ(k) = q(k) / N`.
    pub fn gamma(&self) -> Vec<f64> {
        let n = self.budget as f64;
        self.q.iter().map(|&q| q as f64 / n).collect()
    }

    /// Objective `Z = Σ_j 1 / (q(m) q(m-1) ⋯ q(m-j))`.
    pub fn objective(&self) -> f64 {
        allocation_objective(&self.q)
    }
}

fn check_budget(budget: usize, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("m", "must be at least 1"));
    }
    if budget < m {
        return Err(Error::Infeasible(format!(
            "budget {budget} cannot give {m} stages one sample each"
        )));
    }
    Ok(())
}

/// How the budget is split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    Uniform,
    /// The closed-form sizes; their sum is generally below the budget.
    PaperOptimal,
    BudgetConsistent,
}

impl ScheduleKind {
    pub fn build(&self, budget: usize, m: usize) -> Result<PartitionSchedule> {
        match self {
            ScheduleKind::Uniform => PartitionSchedule::uniform(budget, m),
            ScheduleKind::PaperOptimal => {
                let p = paper_optimal(budget, m, 1.0, 1.0)?;
                PartitionSchedule::from_sizes(p.q)
            }
            ScheduleKind::BudgetConsistent => budget_consistent(budget, m),
        }
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ScheduleKind::Uniform),
            "paper-optimal" => Ok(ScheduleKind::PaperOptimal),
            "budget-consistent" => Ok(ScheduleKind::BudgetConsistent),
            _ => Err(Error::invalid(
                "schedule",
                format!("`{s}` is not one of uniform, paper-optimal, budget-consistent"),
            )),
        }
    }
}

/// Result of [`paper_optimal`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PaperOptimal {
    pub q: Vec<usize>,
    pub sum: usize,
    pub budget: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Floor that absorbs representation error, so `⌊1e6^{1/2}⌋ = 1000`.
fn robust_floor(x: f64) -> f64 {
    (x + 1e-12 * x.abs().max(1.0)).floor()
}

/// Closed-form stage sizes
/// `q(m-k) = ⌊N^{2^{-k-1}} - C N^{2^{-k-2}}⌋` for `k = 0, …, m-2` and
/// `q(1) = ⌊C₁ N^{2^{-m}}⌋`. For `m = 1` only the last formula applies.
pub fn paper_optimal(budget: usize, m: usize, c: f64, c1: f64) -> Result<PaperOptimal> {
    check_budget(budget, m)?;
    if !(c.is_finite() && c >= 0.0 && c1.is_finite() && c1 > 0.0) {
        return Err(Error::invalid("constants", "need C >= 0 and C1 > 0"));
    }
    let n = budget as f64;
    let root = |e: i32| n.powf(0.5f64.powi(e));
    let mut q = vec![0usize; m];
    for k in 0..m.saturating_sub(1) {
        let v = robust_floor(root(k as i32 + 1) - c * root(k as i32 + 2));
        if v < 1.0 {
            return Err(Error::Infeasible(format!(
                "stage {} gets {v} samples",
                m - k
            )));
        }
        q[m - 1 - k] = v as usize;
    }
    let v = robust_floor(c1 * root(m as i32));
    if v < 1.0 {
        return Err(Error::Infeasible(format!("stage 1 gets {v} samples")));
    }
    q[0] = v as usize;
    let sum = q.iter().sum();
    Ok(PaperOptimal {
        warning: (sum != budget).then(|| "sum != budget".to_string()),
        q,
        sum,
        budget,
    })
}

/// `Z = Σ_{j=0}^{m-1} 1 / Π_{i=0}^{j} q(m-i)` for sizes in stage order.
pub fn allocation_objective(q: &[usize]) -> f64 {
    let mut prod = 1.0;
    let mut z = 0.0;
    for &v in q.iter().rev() {
        prod *= v as f64;
        z += 1.0 / prod;
    }
    z
}

/// Exact `Z` as a fraction `(numerator, denominator)`.
fn objective_fraction(q: &[usize]) -> (u128, u128) {
    // Z = Σ_j Π_{stages below m-j} q / Π q.
    let den: u128 = q.iter().map(|&v| v as u128).product();
    let mut num = 0u128;
    let mut prefix = 1u128;
    for &v in q.iter().rev() {
        prefix *= v as u128;
        num += den / prefix;
    }
    (num, den)
}

/// Sizes summing exactly to `N` that locally minimise [`allocation_objective`].
///
/// Starts from `q(m-k) ≈ N^{2^{-k}}` for `k ≥ 1`, gives the rest to the last
/// stage, then moves samples between stages while `Z` decreases.
pub fn budget_consistent(budget: usize, m: usize) -> Result<PartitionSchedule> {
    check_budget(budget, m)?;
    let n = budget as f64;
    let mut q = vec![1usize; m];
    for k in 1..m {
        q[m - 1 - k] = (n.powf(0.5f64.powi(k as i32)).round() as usize).max(1);
    }
    let rest: usize = q[..m - 1].iter().sum();
    if rest >= budget {
        q = vec![1; m];
        q[m - 1] = budget - (m - 1);
    } else {
        q[m - 1] = budget - rest;
    }
    let mut step = 1usize << (usize::BITS - 1 - budget.leading_zeros());
    loop {
        loop {
            let current = allocation_objective(&q);
            let mut best: Option<(f64, usize, usize)> = None;
            for from in 0..m {
                if q[from] <= step {
                    continue;
                }
                for to in 0..m {
                    if to == from {
                        continue;
                    }
                    q[from] -= step;
                    q[to] += step;
                    let z = allocation_objective(&q);
                    q[from] += step;
                    q[to] -= step;
                    if z < current * (1.0 - 1e-15) && best.is_none_or(|b| z < b.0) {
                        best = Some((z, from, to));
                    }
                }
            }
            match best {
                Some((_, from, to)) => {
                    q[from] -= step;
                    q[to] += step;
                }
                None => break,
            }
        }
        if step == 1 {
            break;
        }
        step /= 2;
    }
    PartitionSchedule::new(q, budget)
}

/// Exhaustive minimiser of `Z` over positive sizes summing to `N`, for
/// `N ≤ 500` and `m ≤ 3`. Ties resolve to the lexicographically smallest sizes.
pub fn brute_force_allocation(budget: usize, m: usize) -> Result<PartitionSchedule> {
    if budget > 500 || m > 3 {
        return Err(Error::invalid(
            "budget",
            "exhaustive search is limited to N <= 500 and m <= 3",
        ));
    }
    check_budget(budget, m)?;
    let mut best: Option<(Vec<usize>, (u128, u128))> = None;
    let mut consider = |q: Vec<usize>| {
        let f = objective_fraction(&q);
        let better = match &best {
            None => true,
            Some((_, b)) => f.0 * b.1 < b.0 * f.1,
        };
        if better {
            best = Some((q, f));
        }
    };
    match m {
        1 => consider(vec![budget]),
        2 => {
            for a in 1..budget {
                consider(vec![a, budget - a]);
            }
        }
        _ => {
            for a in 1..budget {
                for b in 1..budget - a {
                    consider(vec![a, b, budget - a - b]);
                }
            }
        }
    }
    PartitionSchedule::new(best.expect("at least one composition").0, budget)
}

/// Checks on a proposed allocation. Violations are listed, never raised.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionReport {
    pub sum: usize,
    pub budget: usize,
    /// `q(m) / N`.
    pub last_stage_ratio: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub objective: Option<f64>,
    pub violations: Vec<String>,
}

impl PartitionReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_partition(q: &[usize], budget: usize) -> PartitionReport {
    let mut violations = Vec::new();
    if q.is_empty() {
        violations.push("no stages".to_string());
    }
    for (k, &v) in q.iter().enumerate() {
        if v < 1 {
            violations.push(format!("q({}) < 1", k + 1));
        }
    }
    let sum: usize = q.iter().sum();
    if sum != budget {
        violations.push(format!("sum of q is {sum}, budget is {budget}"));
    }
    let n = budget.max(1) as f64;
    let gamma: Vec<f64> = q.iter().map(|&v| v as f64 / n).collect();
    PartitionReport {
        sum,
        budget,
        last_stage_ratio: q.last().map_or(0.0, |&v| v as f64 / n),
        gamma_min: gamma.iter().copied().fold(f64::INFINITY, f64::min),
        gamma_max: gamma.iter().copied().fold(0.0, f64::max),
        objective: (!q.is_empty() && q.iter().all(|&v| v > 0)).then(|| allocation_objective(q)),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_puts_remainder_last() {
        assert_eq!(
            PartitionSchedule::uniform(10, 3).unwrap().sizes(),
            &[3, 3, 4]
        );
        assert!(matches!(
            PartitionSchedule::uniform(2, 3),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn closed_form_sizes() {
        // ⌊10^1.5 - 10^0.75⌋ = ⌊25.9994⌋.
        let p = paper_optimal(1_000_000, 3, 1.0, 1.0).unwrap();
        assert_eq!(p.q, vec![5, 25, 968]);
        assert_eq!(p.sum, 998);
        assert_eq!(p.warning.as_deref(), Some("sum != budget"));
        assert_eq!(paper_optimal(10_000, 2, 1.0, 1.0).unwrap().q, vec![10, 90]);
        assert_eq!(paper_optimal(256, 2, 1.0, 1.0).unwrap().q, vec![4, 12]);
        assert_eq!(paper_optimal(100, 1, 1.0, 1.0).unwrap().q, vec![10]);
        assert!(matches!(
            paper_optimal(4, 3, 1.0, 1.0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn objective_values() {
        assert_eq!(allocation_objective(&[2, 4]), 0.375);
        assert_eq!(allocation_objective(&[2, 2, 2]), 0.875);
        assert_eq!(objective_fraction(&[2, 4]), (3, 8));
    }

    #[test]
    fn budget_consistent_examples() {
        assert_eq!(budget_consistent(12, 2).unwrap().sizes(), &[3, 9]);
        assert_eq!(budget_consistent(100, 2).unwrap().sizes(), &[9, 91]);
        let s = budget_consistent(1_000_000, 3).unwrap();
        assert_eq!(s.total(), 1_000_000);
    }

    #[test]
    fn brute_force_ties_and_limits() {
        assert_eq!(brute_force_allocation(12, 2).unwrap().sizes(), &[3, 9]);
        assert_eq!(brute_force_allocation(3, 3).unwrap().sizes(), &[1, 1, 1]);
        assert!(brute_force_allocation(501, 2).is_err());
        assert!(brute_force_allocation(100, 4).is_err());
    }

    #[test]
    fn report_flags_problems() {
        assert!(validate_partition(&[3, 9], 12).is_valid());
        assert!(!validate_partition(&[3, 0], 3).is_valid());
        let r = validate_partition(&[5, 25, 968], 1_000_000);
        assert_eq!(
            r.violations,
            vec!["sum of q is 998, budget is 1000000".to_string()]
        );
        let u = PartitionSchedule::uniform(100, 4).unwrap();
        let r = validate_partition(u.sizes(), u.budget());
        assert!(r.is_valid());
        assert_eq!(r.last_stage_ratio, 0.25);
    }

    #[test]
    fn schedule_kind_parsing() {
        assert_eq!(
            "paper-optimal".parse::<ScheduleKind>().unwrap(),
            ScheduleKind::PaperOptimal
        );
        assert!("optimal".parse::<ScheduleKind>().is_err());
    }
}
