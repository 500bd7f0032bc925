use proptest::prelude::*;
use wassbound::assignment::{flapjack, flapjack_par, solve_assignment, CostMatrix};
use wassbound::jackknife::jackknife_variance;
use wassbound::wasserstein::{point_bounds, w2_squared, w2_squared_1d, EmpiricalMeasure};

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_force(c: &CostMatrix) -> f64 {
    let n = c.n();
    permutations(n)
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        / n as f64
}

fn cost_matrix(max_n: usize) -> impl Strategy<Value = CostMatrix> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(-50.0f64..50.0, n * n).prop_map(move |data| CostMatrix::new(n, data).unwrap())
    })
}

fn measure_triple(max_n: usize, max_d: usize) -> impl Strategy<Value = [EmpiricalMeasure; 3]> {
    (2..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, n * d), 3).prop_map(move |v| {
            [0, 1, 2].map(|k| EmpiricalMeasure::new(n, d, v[k].clone()).unwrap())
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_matches_enumeration(c in cost_matrix(6)) {
        let sol = solve_assignment(&c).unwrap();
        let best = brute_force(&c);
        prop_assert!((sol.objective - best).abs() <= 1e-9 * (1.0 + best.abs()));
        sol.verify(&c, 1e-9).unwrap();
    }

    #[test]
    fn leave_one_out_matches_deleted_subproblems(c in cost_matrix(7).prop_filter("n >= 2", |c| c.n() >= 2)) {
        let loo = flapjack(&c).unwrap();
        let par = flapjack_par(&c).unwrap();
        prop_assert_eq!(&loo, &par);
        prop_assert!((loo.full_cost - brute_force(&c)).abs() <= 1e-9 * (1.0 + loo.full_cost.abs()));
        for j in 0..c.n() {
            let sub = solve_assignment(&c.without(j).unwrap()).unwrap().objective;
            prop_assert!((loo.loo_costs[j] - sub).abs() <= 1e-9 * (1.0 + sub.abs()), "j = {}: {} vs {}", j, loo.loo_costs[j], sub);
        }
    }

    #[test]
    fn sorted_pairing_matches_general_solver(xs in prop::collection::vec(-10.0f64..10.0, 1..40), seed in any::<u64>()) {
        let n = xs.len();
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| (x * 1.7 + (seed.wrapping_add(i as u64) % 97) as f64 * 0.1).sin() * 4.0).collect();
        let a = EmpiricalMeasure::from_values(&xs).unwrap();
        let b = EmpiricalMeasure::from_values(&ys).unwrap();
        let general = w2_squared(&a, &b).unwrap().0;
        let sorted = w2_squared_1d(&a, &b).unwrap();
        prop_assert!((general - sorted).abs() <= 1e-9 * (1.0 + sorted), "n = {}: {} vs {}", n, general, sorted);
    }

    #[test]
    fn empirical_w2_is_a_metric(m in measure_triple(6, 3)) {
        let w = |a: &EmpiricalMeasure, b: &EmpiricalMeasure| w2_squared(a, b).unwrap().0.max(0.0).sqrt();
        let [a, b, c] = &m;
        prop_assert!(w(a, a) <= 1e-12);
        prop_assert!((w(a, b) - w(b, a)).abs() <= 1e-9);
        prop_assert!(w(a, c) <= w(a, b) + w(b, c) + 1e-9);
    }

    #[test]
    fn jackknife_of_the_mean_is_the_standard_error(xs in prop::collection::vec(-100.0f64..100.0, 2..60)) {
        let n = xs.len() as f64;
        let total: f64 = xs.iter().sum();
        let loo: Vec<f64> = xs.iter().map(|x| (total - x) / (n - 1.0)).collect();
        let mean = total / n;
        let s2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let jk = jackknife_variance(&loo).unwrap();
        prop_assert!((jk.variance - s2 / n).abs() <= 1e-9 * (1.0 + s2 / n));
    }

    #[test]
    fn bounds_vanish_when_nu_is_mu_prime(m in measure_triple(6, 3)) {
        let [nu, mu, _] = &m;
        let (u, l) = point_bounds(nu, mu, nu).unwrap();
        prop_assert_eq!(u, 0.0);
        prop_assert_eq!(l, 0.0);
    }

    #[test]
    fn single_point_bounds_match_closed_form(x in -5.0f64..5.0, y in -5.0f64..5.0, z in -5.0f64..5.0) {
        let one = |v: f64| EmpiricalMeasure::from_values(&[v]).unwrap();
        let (u, l) = point_bounds(&one(x), &one(y), &one(z)).unwrap();
        prop_assert!((u - ((x - y).powi(2) - (z - y).powi(2))).abs() <= 1e-12);
        prop_assert!((l - ((x - y).abs() - (z - y).abs())).abs() <= 1e-12);
    }
}
