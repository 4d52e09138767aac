use proptest::prelude::*;

use lipsolve::builders::{build_binomial_model, default_grid};
use lipsolve::io::{model_json, parse_model};
use lipsolve::oracle::{random_model, random_predictive, random_prior, seeded_rng};
use lipsolve::{
    bayes_predictive, bayes_risk, chain_rule_check, conditional_mutual_information,
    dominance_check, dominating_predictive, solve_lip, ModelTable, Prior, SolverConfig,
};

fn shape() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 1usize..5, 1usize..4, 2usize..4)
}

fn instance(seed: u64, t: usize, k: usize, l: usize) -> (ModelTable, Prior) {
    let mut rng = seeded_rng(seed);
    let m = random_model(&mut rng, t, k, l);
    let p = random_prior(&mut rng, t);
    (m, p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bayes_predictive_minimizes_bayes_risk((seed, t, k, l) in shape()) {
        let (m, prior) = instance(seed, t, k, l);
        let q = random_predictive(&mut seeded_rng(seed ^ 1), k, l);
        let own = bayes_risk(&m, &prior, &bayes_predictive(&m, &prior).unwrap()).value();
        prop_assert!(bayes_risk(&m, &prior, &q).value() >= own - 1e-12);
        prop_assert!((own - conditional_mutual_information(&m, &prior)).abs() < 1e-12);
    }

    #[test]
    fn information_bounds_and_chain_rule((seed, t, k, l) in shape()) {
        let (m, prior) = instance(seed, t, k, l);
        let c = chain_rule_check(&m, &prior);
        prop_assert!((c.i_cond - (c.i_xy - c.i_x)).abs() < 1e-12);
        let i = conditional_mutual_information(&m, &prior);
        prop_assert!(i >= 0.0 && i <= (t as f64).ln() + 1e-12);
        prop_assert!(c.i_x <= c.i_xy + 1e-12);
    }

    #[test]
    fn mutual_information_is_concave((seed, t, k, l) in shape(), lambda in 0.0f64..=1.0) {
        let (m, a) = instance(seed, t, k, l);
        let b = random_prior(&mut seeded_rng(seed.wrapping_add(9)), t);
        let mid = Prior::mix(&a, &b, lambda).unwrap();
        let lhs = conditional_mutual_information(&m, &mid);
        let rhs = lambda * conditional_mutual_information(&m, &a)
            + (1.0 - lambda) * conditional_mutual_information(&m, &b);
        prop_assert!(lhs >= rhs - 1e-12);
    }

    #[test]
    fn model_json_round_trips((seed, t, k, l) in shape()) {
        let (m, _) = instance(seed, t, k, l);
        let text = model_json(&m).unwrap();
        prop_assert_eq!(parse_model(&text).unwrap(), m);
    }

    #[test]
    fn mirror_relabeling_preserves_information(n in 0u64..6, mm in 1u64..6, seed in any::<u64>()) {
        let m = build_binomial_model(n, mm, &default_grid()).unwrap();
        let sigma = m.mirror_permutation().unwrap();
        let prior = random_prior(&mut seeded_rng(seed), m.t());
        let a = conditional_mutual_information(&m, &prior);
        let b = conditional_mutual_information(&m, &prior.permuted(&sigma));
        prop_assert!((a - b).abs() < 1e-13, "{} vs {}", a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_respects_floor_and_ascends((seed, t, k, l) in shape(), floor in 0.0f64..0.45) {
        let (m, _) = instance(seed, t, k, l);
        let cfg = SolverConfig { floor, certificate_tolerance: 1e-10, ..SolverConfig::default() };
        let r = solve_lip(&m, &cfg).unwrap();
        prop_assert!(r.converged);
        for &w in r.prior.weights() {
            prop_assert!(w >= floor / t as f64 - 1e-15);
        }
        for pair in r.trace.windows(2) {
            prop_assert!(pair[1].objective >= pair[0].objective - 1e-12);
        }
        prop_assert!((r.objective - conditional_mutual_information(&m, &r.prior)).abs() < 1e-12);
        prop_assert!(r.certificate_gap >= 0.0);
    }

    #[test]
    fn dominating_predictive_dominates((seed, t, k, l) in shape()) {
        let (m, _) = instance(seed, t, k, l);
        let q = random_predictive(&mut seeded_rng(seed ^ 7), k, l);
        let cfg = SolverConfig { certificate_tolerance: 1e-12, ..SolverConfig::default() };
        let report = dominating_predictive(&m, &q, &cfg).unwrap();
        prop_assert!(report.converged());
        prop_assert!(report.dominates(), "{:?}", report.comparison);
        prop_assert!(dominance_check(&m, &q, &q).unwrap().dominates);
    }
}
