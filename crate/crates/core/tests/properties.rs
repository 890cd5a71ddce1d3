use mcie_core::cases::manufactured_case;
use mcie_core::fredholm::{mc_solve_fredholm, McOptions};
use mcie_core::grid::PointSet;
use mcie_core::inference::band::ConfidenceBand;
use mcie_core::inference::covariance::{
    estimate_covariance, psd_repair, CovarianceEstimate, CovarianceSource,
};
use mcie_core::inference::gaussian_sup_quantile;
use mcie_core::measure::{sample_measure, MeasureSpec};
use mcie_core::partition::{
    allocation_objective, brute_force_allocation, budget_consistent, paper_optimal,
    validate_partition, PartitionSchedule,
};
use mcie_core::rng::{Channel, Lane, RandomStream};
use mcie_core::summation::compensated_sum;
use mcie_core::tau::{interpolate, uniform_tau_grid, TauInterpolation};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn uniform_partition_is_valid(n in 1usize..100_000, m in 1usize..8) {
        prop_assume!(n >= m);
        let s = PartitionSchedule::uniform(n, m).unwrap();
        prop_assert!(validate_partition(s.sizes(), n).is_valid());
        let g: f64 = s.gamma().iter().sum();
        prop_assert!((g - 1.0).abs() < 1e-12);
        let c = s.cumulative();
        prop_assert!(c.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(*c.last().unwrap(), n);
    }

    #[test]
    fn budget_consistent_is_valid_and_near_optimal(n in 1usize..120, m in 1usize..4) {
        prop_assume!(n >= m);
        let s = budget_consistent(n, m).unwrap();
        prop_assert!(validate_partition(s.sizes(), n).is_valid());
        let best = brute_force_allocation(n, m).unwrap();
        prop_assert!(allocation_objective(s.sizes()) <= 1.05 * allocation_objective(best.sizes()));
        prop_assert!(allocation_objective(best.sizes()) <= allocation_objective(s.sizes()) * (1.0 + 1e-12));
    }

    #[test]
    fn budget_consistent_large_budgets_are_valid(n in 1_000usize..10_000_000, m in 1usize..6) {
        let s = budget_consistent(n, m).unwrap();
        prop_assert!(validate_partition(s.sizes(), n).is_valid());
    }

    #[test]
    fn paper_optimal_last_stage_near_root_n(exp in 6.0f64..12.0, m in 2usize..5) {
        let n = 10f64.powf(exp) as usize;
        let q = paper_optimal(n, m, 1.0, 1.0).unwrap().q;
        let ratio = *q.last().unwrap() as f64 / (n as f64).sqrt();
        prop_assert!((0.9..=1.0).contains(&ratio), "{}", ratio);
    }

    #[test]
    fn lanes_are_pure_functions(seed in any::<u64>(), rep in 0u32..1000, stage in 0u16..10, idx in 0u64..10_000) {
        let lane = Lane::new(Channel::Xi, rep, stage);
        let a = RandomStream::new(seed).uniform_at(lane, idx);
        let mut rng = RandomStream::new(seed).lane(lane);
        let mut last = 0.0;
        for _ in 0..=idx.min(200) {
            last = rng.next_uniform();
        }
        if idx <= 200 {
            prop_assert_eq!(a, last);
        }
        prop_assert!(a > 0.0 && a < 1.0);
    }

    #[test]
    fn measure_draws_are_prefix_consistent(seed in any::<u64>(), short in 1usize..50, extra in 0usize..50) {
        let m = MeasureSpec::UniformCube { dim: 2 };
        let stream = RandomStream::new(seed);
        let lane = Lane::new(Channel::Xi, 1, 1);
        let a = sample_measure(&m, short, &stream, lane).unwrap();
        let b = sample_measure(&m, short + extra, &stream, lane).unwrap();
        prop_assert_eq!(a.coords(), &b.coords()[..a.coords().len()]);
    }

    #[test]
    fn repair_yields_symmetric_psd(entries in prop::collection::vec(-1.0f64..1.0, 25)) {
        let a = DMatrix::from_vec(5, 5, entries);
        let (r, info) = psd_repair(a.clone());
        prop_assert!(info.asymmetry >= 0.0);
        prop_assert_eq!(r.clone(), r.transpose());
        let min = SymmetricEigen::new(r.clone()).eigenvalues.min();
        prop_assert!(min >= -1e-10 * r.trace().abs().max(1.0));
    }

    #[test]
    fn band_halfwidth_scales_with_root_q(u in 0.0f64..10.0, q in 1usize..1_000_000) {
        let a = ConfidenceBand::from_quantile(vec![0.0], u, q, 0.9).unwrap();
        let b = ConfidenceBand::from_quantile(vec![0.0], u, 4 * q, 0.9).unwrap();
        prop_assert_eq!(a.halfwidth, 2.0 * b.halfwidth);
    }

    #[test]
    fn compensated_sum_is_order_insensitive(mut v in prop::collection::vec(-1e6f64..1e6, 1..200)) {
        let a = compensated_sum(v.iter().copied());
        v.reverse();
        let b = compensated_sum(v.iter().copied());
        let scale: f64 = v.iter().map(|x| x.abs()).sum();
        prop_assert!((a - b).abs() <= 1e-15 * scale.max(1.0));
    }

    #[test]
    fn cubic_interpolation_reproduces_cubics(c in prop::array::uniform4(-3.0f64..3.0), x in 0.0f64..1.0) {
        let tau = uniform_tau_grid(17).unwrap();
        let f = |t: f64| c[0] + t * (c[1] + t * (c[2] + t * c[3]));
        let col: Vec<f64> = tau.iter().map(|&t| f(t)).collect();
        let got = interpolate(&tau, &col, x, TauInterpolation::Cubic);
        prop_assert!((got - f(x)).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn empirical_covariance_is_symmetric_and_psd(seed in any::<u64>(), case in prop::sample::select(vec!["fred-lin-const", "fred-smooth"])) {
        let p = manufactured_case(case).unwrap().fredholm().unwrap().clone();
        let schedule = PartitionSchedule::uniform(600, 3).unwrap();
        let stages = mc_solve_fredholm(&p, &schedule, &RandomStream::new(seed), 0).unwrap();
        let mut coords = Vec::new();
        for s in &stages {
            coords.extend_from_slice(s.samples.coords());
        }
        let est = estimate_covariance(&p, Some(&stages[1]), &PointSet::new(1, coords).unwrap(), McOptions::default()).unwrap();
        prop_assert!(est.asymmetry <= 1e-10);
        let m = est.matrix();
        prop_assert_eq!(m.clone(), m.transpose());
        let min = SymmetricEigen::new(m.clone()).eigenvalues.min();
        prop_assert!(min >= -1e-10 * m.trace().abs().max(1e-300));
    }

    #[test]
    fn sup_quantile_monotone_and_linear(seed in any::<u64>(), c in 0.1f64..10.0, l1 in 0.5f64..0.9, dl in 0.01f64..0.09) {
        let points = PointSet::from_scalars(vec![0.0, 0.5, 1.0]).unwrap();
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, 0.5, 1.0, 0.5, 0.2, 0.5, 1.0]);
        let cov = CovarianceEstimate::new(points, cov, CovarianceSource::Limit).unwrap();
        let stream = RandomStream::new(seed);
        let lane = Lane::new(Channel::Gauss, 0, 0);
        let a = gaussian_sup_quantile(&cov, l1, 2_000, &stream, lane).unwrap();
        let b = gaussian_sup_quantile(&cov, l1 + dl, 2_000, &stream, lane).unwrap();
        prop_assert!(a <= b);
        let s = gaussian_sup_quantile(&cov.scaled(c * c), l1, 2_000, &stream, lane).unwrap();
        prop_assert!((s / a - c).abs() <= 1e-9 * c);
    }
}
