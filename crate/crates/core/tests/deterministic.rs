use mcie_core::cases::manufactured_case;
use mcie_core::deterministic::{
    apriori_error_bound, picard_solve, picard_step, sup_distance, volterra_solve,
    volterra_tail_bound, FunctionOnGrid,
};
use mcie_core::grid::{build_grid, GridRule, GridSpec};
use mcie_core::measure::MeasureSpec;
use mcie_core::problem::{FredholmProblem, Kernel};
use mcie_core::tau::uniform_tau_grid;
use proptest::prelude::*;

fn gl_grid(n: usize) -> mcie_core::grid::MetricSpaceGrid {
    build_grid(&GridSpec::new(1, n).with_rule(GridRule::GaussLegendre)).unwrap()
}

#[test]
fn picard_step_of_linear_kernel() {
    let p = FredholmProblem::new(
        |t| t[0],
        Kernel::new(|_, s, z| 0.5 * s[0] * z),
        0.5,
        MeasureSpec::UniformCube { dim: 1 },
        gl_grid(8),
    )
    .unwrap();
    let x0 = FunctionOnGrid::new(p.grid().points().iter().map(|t| t[0]).collect());
    let x1 = picard_step(&p, &x0).unwrap();
    for (t, v) in p.grid().points().iter().zip(x1.values()) {
        assert!((v - (t[0] + 1.0 / 6.0)).abs() < 1e-14);
    }
}

#[test]
fn apriori_bound_holds_against_long_run() {
    let case = manufactured_case("fred-smooth").unwrap();
    let p = case.fredholm().unwrap();
    let it = picard_solve(p, 200).unwrap();
    let delta0 = it[1].sup_distance(&it[0]);
    for m in 1..=30 {
        let err = it[m].sup_distance(&it[200]);
        assert!(
            err <= apriori_error_bound(p.rho(), delta0, m).unwrap() + 1e-14,
            "m={m}"
        );
    }
    // the fixed point of the discretized map matches the manufactured solution
    let exact: Vec<f64> = p
        .grid()
        .points()
        .iter()
        .map(|t| case.reference_at(t).unwrap())
        .collect();
    assert!(sup_distance(it[200].values(), &exact) < 1e-8);
}

#[test]
fn volterra_iterates_respect_tail_bound() {
    let p = manufactured_case("volt-exp")
        .unwrap()
        .volterra()
        .unwrap()
        .with_tau_grid(uniform_tau_grid(257).unwrap())
        .unwrap();
    let it = volterra_solve(&p, 10).unwrap();
    let delta0 = it[1].sup_distance(&it[0]);
    let last = p.tau_grid().len() - 1;
    for (n, x) in it.iter().enumerate().skip(1) {
        let err = (x.at(last, 0) - std::f64::consts::E).abs();
        assert!(
            err <= volterra_tail_bound(1.0, delta0, n + 1).unwrap() + 1e-10,
            "n={n}"
        );
    }
}

#[test]
fn tail_bound_matches_truncated_series() {
    for c in [0.1, 0.5, 1.0, 2.0, 3.5, 5.0] {
        for m in 0..=20 {
            let mut term = 1.0;
            let mut sum = 0.0;
            for n in 0..=60 {
                if n > 0 {
                    term *= c / n as f64;
                }
                if n >= m {
                    sum += term;
                }
            }
            let b = volterra_tail_bound(c, 1.0, m).unwrap();
            assert!(
                (b - sum).abs() <= 1e-12 * sum.max(1.0),
                "C={c} m={m}: {b} vs {sum}"
            );
        }
    }
}

#[test]
fn doubling_tau_grid_changes_little() {
    let case = manufactured_case("volt-smooth").unwrap();
    let coarse = case.volterra().unwrap().clone();
    let fine = coarse
        .with_tau_grid(uniform_tau_grid(129).unwrap())
        .unwrap();
    let a = volterra_solve(&coarse, 6).unwrap();
    let b = volterra_solve(&fine, 6).unwrap();
    let mut diff: f64 = 0.0;
    for i in 0..65 {
        for j in 0..a[6].n_cols() {
            diff = diff.max((a[6].at(i, j) - b[6].at(2 * i, j)).abs());
        }
    }
    assert!(diff < 1e-8, "{diff}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn picard_map_is_a_contraction(
        x in prop::collection::vec(-5.0f64..5.0, 16),
        y in prop::collection::vec(-5.0f64..5.0, 16),
    ) {
        let case = manufactured_case("fred-smooth").unwrap();
        let p = case.fredholm().unwrap();
        let (x, y) = (FunctionOnGrid::new(x), FunctionOnGrid::new(y));
        let d = picard_step(p, &x).unwrap().sup_distance(&picard_step(p, &y).unwrap());
        prop_assert!(d <= p.rho() * x.sup_distance(&y) + 1e-12);
    }

    #[test]
    fn apriori_bound_is_monotone(rho in 0.01f64..0.99, delta0 in 0.0f64..10.0, m in 0usize..50) {
        let a = apriori_error_bound(rho, delta0, m).unwrap();
        let b = apriori_error_bound(rho, delta0, m + 1).unwrap();
        prop_assert!(b <= a);
        prop_assert!((b - rho * a).abs() <= 1e-12 * a.max(1e-300));
    }
}
