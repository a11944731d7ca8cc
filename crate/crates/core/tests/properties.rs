use proptest::prelude::*;

use gmf::graphon::{bilinear, discretize, infty_to_one_diff, Graphon, Kernel, StepGraphon};
use gmf::model::{presets, InitialLawSpec};
use gmf::rng::Label;
use gmf::simulator::{em_step, BrownianSource};
use gmf::transport::{
    solve_assignment, wasserstein_p, wasserstein_p_assignment, wasserstein_path, EmpiricalMeasure,
    EmpiricalPathMeasure, Order,
};
use gmf::TimeGrid;

fn symmetric_weights(n: usize) -> impl Strategy<Value = StepGraphon> {
    prop::collection::vec(0.0f64..=1.0, n * n).prop_map(move |raw| {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                w[i * n + j] = raw[i * n + j];
                w[j * n + i] = raw[i * n + j];
            }
        }
        StepGraphon::from_matrix(n, w).unwrap()
    })
}

fn measure(m: usize, dim: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    prop::collection::vec(-5.0f64..5.0, m * dim).prop_map(move |v| EmpiricalMeasure::new(dim, v).unwrap())
}

fn paths(m: usize, steps: usize, dim: usize) -> impl Strategy<Value = EmpiricalPathMeasure> {
    prop::collection::vec(-3.0f64..3.0, m * (steps + 1) * dim).prop_map(move |v| {
        EmpiricalPathMeasure::new(m, TimeGrid::new(1.0, steps).unwrap(), dim, v).unwrap()
    })
}

fn measure_triple() -> impl Strategy<Value = (EmpiricalMeasure, EmpiricalMeasure, EmpiricalMeasure)> {
    (1usize..7, 1usize..4).prop_flat_map(|(m, d)| (measure(m, d), measure(m, d), measure(m, d)))
}

fn path_triple() -> impl Strategy<Value = (EmpiricalPathMeasure, EmpiricalPathMeasure, EmpiricalPathMeasure)> {
    (1usize..6, 1usize..5, 1usize..3).prop_flat_map(|(m, s, d)| (paths(m, s, d), paths(m, s, d), paths(m, s, d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn discretize_is_exactly_symmetric(a in 0.0f64..3.0, b in 0.0f64..3.0, n in 1usize..24) {
        let g = Graphon::from_fn("mix", move |p, q| {
            ((a * (p + q)).sin() * (b * p * q).cos()).abs().min(1.0)
        });
        let s = discretize(&g, n).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(s.weight(i, j).to_bits(), s.weight(j, i).to_bits());
            }
        }
    }

    #[test]
    fn discretize_round_trips_step_graphons(s in (1usize..12).prop_flat_map(symmetric_weights)) {
        let again = discretize(&s.to_graphon(), s.n_blocks()).unwrap();
        prop_assert_eq!(again.weights(), s.weights());
    }

    #[test]
    fn norm_vanishes_on_identical_kernels(s in (1usize..10).prop_flat_map(symmetric_weights)) {
        prop_assert_eq!(infty_to_one_diff(&s, &s, 16, 4, 1).unwrap(), 0.0);
    }

    #[test]
    fn norm_dominates_sign_pairs(
        pair in (2usize..9).prop_flat_map(|n| (symmetric_weights(n), symmetric_weights(n))),
        signs in prop::collection::vec(any::<bool>(), 32),
    ) {
        let (a, b) = pair;
        let g = 16;
        let est = infty_to_one_diff(&a, &b, g, 8, 3).unwrap();
        let mid = |u: usize| (u as f64 + 0.5) / g as f64;
        let area = 1.0 / (g * g) as f64;
        let diff: Vec<f64> = (0..g * g)
            .map(|k| (a.value(mid(k / g), mid(k % g)) - b.value(mid(k / g), mid(k % g))) * area)
            .collect();
        let pm = |b: bool| if b { 1.0 } else { -1.0 };
        let x: Vec<f64> = signs[..g].iter().copied().map(pm).collect();
        let y: Vec<f64> = signs[g..].iter().copied().map(pm).collect();
        prop_assert!(bilinear(&diff, g, &x, &y) <= est + 1e-15);
    }

    #[test]
    fn transport_symmetry_is_exact((mu, nu, _) in measure_triple()) {
        for order in [Order::One, Order::Two] {
            prop_assert_eq!(
                wasserstein_p(&mu, &nu, order).unwrap().to_bits(),
                wasserstein_p(&nu, &mu, order).unwrap().to_bits()
            );
            prop_assert_eq!(
                wasserstein_p_assignment(&mu, &nu, order).unwrap().to_bits(),
                wasserstein_p_assignment(&nu, &mu, order).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn transport_triangle_and_lyapunov((mu, nu, rho) in measure_triple()) {
        for order in [Order::One, Order::Two] {
            let w = |a: &EmpiricalMeasure, b: &EmpiricalMeasure| wasserstein_p(a, b, order).unwrap();
            prop_assert!(w(&mu, &rho) <= w(&mu, &nu) + w(&nu, &rho) + 1e-9);
        }
        prop_assert!(wasserstein_p(&mu, &nu, Order::One).unwrap() <= wasserstein_p(&mu, &nu, Order::Two).unwrap() + 1e-12);
    }

    #[test]
    fn path_transport_axioms((mu, nu, rho) in path_triple()) {
        for order in [Order::One, Order::Two] {
            let w = |a: &EmpiricalPathMeasure, b: &EmpiricalPathMeasure| wasserstein_path(a, b, order, 1.0).unwrap();
            prop_assert_eq!(w(&mu, &nu).to_bits(), w(&nu, &mu).to_bits());
            prop_assert!(w(&mu, &rho) <= w(&mu, &nu) + w(&nu, &rho) + 1e-9);
            prop_assert_eq!(w(&mu, &mu), 0.0);
        }
        prop_assert!(wasserstein_path(&mu, &nu, Order::One, 1.0).unwrap()
            <= wasserstein_path(&mu, &nu, Order::Two, 1.0).unwrap() + 1e-12);
    }

    #[test]
    fn sorted_matching_agrees_with_assignment(a in prop::collection::vec(-4.0f64..4.0, 1..40), seed in any::<u64>()) {
        let m = a.len();
        let b: Vec<f64> = (0..m).map(|i| ((seed.wrapping_mul(i as u64 + 1) % 1000) as f64) / 125.0 - 4.0).collect();
        let mu = EmpiricalMeasure::scalar(a).unwrap();
        let nu = EmpiricalMeasure::scalar(b).unwrap();
        let fast2 = wasserstein_p(&mu, &nu, Order::Two).unwrap();
        let slow2 = wasserstein_p_assignment(&mu, &nu, Order::Two).unwrap();
        prop_assert_eq!(fast2, slow2);
        let fast1 = wasserstein_p(&mu, &nu, Order::One).unwrap();
        let slow1 = wasserstein_p_assignment(&mu, &nu, Order::One).unwrap();
        prop_assert!((fast1 - slow1).abs() <= 1e-12);
    }

    #[test]
    fn assignment_is_a_permutation(cost in prop::collection::vec(0.0f64..10.0, 1..=64)) {
        let m = (cost.len() as f64).sqrt() as usize;
        let cost = &cost[..m * m];
        let a = solve_assignment(cost, m).unwrap();
        let mut seen = a.columns.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..m).collect::<Vec<_>>());
        let identity: f64 = (0..m).map(|i| cost[i * m + i]).sum();
        prop_assert!(a.total <= identity + 1e-12);
    }

    #[test]
    fn labels_reduce((num, den) in (1u64..1000).prop_flat_map(|d| (0..=d, Just(d))), scale in 1u64..50) {
        prop_assert_eq!(Label::new(num * scale, den * scale), Label::new(num, den));
    }

    #[test]
    fn coarse_increment_is_sum_of_fine(seed in any::<u64>(), log_steps in 1u32..8, dim in 1usize..4) {
        let steps = 1usize << log_steps;
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let fine = BrownianSource::new(seed, dim).increments(Label::right_endpoint(1, 3), 0, grid);
        let half = BrownianSource::coarsen(&fine, dim, 2).unwrap();
        for m in 0..steps / 2 {
            for c in 0..dim {
                prop_assert_eq!(half[m * dim + c], fine[2 * m * dim + c] + fine[(2 * m + 1) * dim + c]);
            }
        }
        let direct = BrownianSource::coarsen(&fine, dim, steps).unwrap();
        let stepwise = (1..log_steps).try_fold(half, |level, _| BrownianSource::coarsen(&level, dim, 2)).unwrap();
        prop_assert_eq!(direct, stepwise);
    }

    #[test]
    fn consensus_step_conserves_mean(states in prop::collection::vec(-10.0f64..10.0, 2..40), dt in 0.001f64..0.5) {
        let big_n = states.len();
        let model = presets::consensus_only(1.0, InitialLawSpec::point(vec![0.0])).unwrap();
        let w = StepGraphon::uniform(big_n, 1.0).unwrap();
        let zeros = vec![0.0; big_n];
        let next = em_step(0, 0.0, dt, &states, &model, &w, &zeros, &zeros).unwrap();
        let before: f64 = states.iter().sum::<f64>() / big_n as f64;
        let after: f64 = next.iter().sum::<f64>() / big_n as f64;
        prop_assert!((before - after).abs() <= 1e-12);
    }
}
