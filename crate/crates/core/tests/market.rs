mod common;

use std::collections::BTreeMap;

use gridres::market::{
    allocate_power, lp_optimum, relative_gap, run_market, solve_equilibrium, AllocationRequest, DualState,
    MarketConfig, StepSchedule,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn multipliers_stay_nonnegative(
        start in prop::collection::vec(0.0f64..5.0, 1..6),
        steps in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 6), 1..50),
        c0 in 1e-4f64..10.0,
        diminishing in any::<bool>(),
    ) {
        let schedule = if diminishing { StepSchedule::Diminishing(c0) } else { StepSchedule::Constant(c0) };
        let mut dual = DualState::new(start.clone(), schedule);
        for g in steps {
            dual = dual.dual_update(&g[..start.len()]).unwrap();
            prop_assert!(dual.lambda.iter().all(|&l| l >= 0.0));
        }
    }

    #[test]
    fn allocation_respects_budget_and_is_idempotent(
        reqs in prop::collection::vec((0.0f64..50.0, 0.0f64..1.0, 0.1f64..4.0), 1..8),
        available in 0.0f64..200.0,
    ) {
        let requests: BTreeMap<usize, AllocationRequest<f64>> = reqs
            .iter()
            .enumerate()
            .map(|(k, &(r, frac, p))| (k, AllocationRequest::new(r).with_need(r * frac).with_priority(p)))
            .collect();
        let grants = allocate_power(&requests, available);
        let total: f64 = grants.values().sum();
        prop_assert!(total <= available + 1e-9);
        for (k, g) in &grants {
            prop_assert!(*g >= 0.0 && *g <= requests[k].requested + 1e-12);
        }
        let need: f64 = requests.values().map(|r| r.need).sum();
        if need <= available {
            for (k, g) in &grants {
                prop_assert!(*g >= requests[k].need - 1e-9);
            }
        }
        let again: BTreeMap<usize, AllocationRequest<f64>> = grants
            .iter()
            .map(|(&k, &g)| (k, AllocationRequest::new(g).with_need(g.min(requests[&k].need)).with_priority(requests[&k].priority)))
            .collect();
        let regrant = allocate_power(&again, available);
        for (k, g) in &grants {
            prop_assert!((regrant[k] - g).abs() <= 1e-9);
        }
    }
}

#[test]
fn sixty_forty() {
    let requests = BTreeMap::from([
        ("a", AllocationRequest::new(60.0).with_need(60.0)),
        ("b", AllocationRequest::new(40.0)),
    ]);
    let grants = allocate_power(&requests, 100.0);
    assert_eq!(grants["a"], 60.0);
    assert_eq!(grants["b"], 40.0);
}

#[test]
fn dual_bound_holds_without_regularization() {
    let config = MarketConfig {
        regularization: 0.0,
        regularization_floor: 0.0,
        max_iter: 5000,
        ..MarketConfig::default()
    };
    let mut r = common::rng(31);
    for k in 0..60 {
        let (agents, c) = common::random_market(&mut r, 2 + k % 5);
        let eq = solve_equilibrium(&common::island(), &agents, &c, &config, None, &mut common::rng(k as u64)).unwrap();
        let opt = lp_optimum(&agents, &c, 1.0).unwrap().unwrap().value;
        assert!(eq.best_dual_value >= opt - 1e-9 * opt.abs().max(1.0), "dual {} < opt {opt}", eq.best_dual_value);
        let gap = (eq.best_dual_value - opt) / opt.abs().max(1.0);
        assert!(gap <= 1e-2, "instance {k}: dual gap {gap}");
        assert!(matches!(config.resolve_schedule(&c), StepSchedule::Diminishing(_)));
    }
}

#[test]
fn complementary_slackness_at_convergence() {
    let config = MarketConfig::default();
    let zeta_max = config.regularization_floor;
    let mut r = common::rng(32);
    for k in 0..100 {
        let (agents, c) = common::random_market(&mut r, 2 + k % 8);
        let eq = solve_equilibrium(&common::island(), &agents, &c, &config, None, &mut common::rng(k as u64)).unwrap();
        assert!(eq.converged);
        let g = c.violation(&eq.x).unwrap();
        let scale = c.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (l, gk) in eq.lambda_final.iter().zip(&g) {
            assert!(*gk <= 1e-2 * scale.max(1e-9) + 1e-9, "violation {gk}");
            assert!(gk.abs() <= config.xi + 1e-9 || *l <= zeta_max * gk.abs(), "λ {l} with slack {gk}");
            assert!(l * gk.abs() <= 1e-2, "λ·|g| = {}", l * gk.abs());
        }
    }
}

#[test]
fn ten_agents_converge() {
    let mut r = common::rng(33);
    for k in 0..20 {
        let (agents, c) = common::random_market(&mut r, 10);
        let eq = solve_equilibrium(&common::island(), &agents, &c, &MarketConfig::default(), None, &mut common::rng(k)).unwrap();
        assert!(eq.converged);
        assert!(eq.residual <= 1e-3);
    }
}

#[test]
fn six_agent_gaps_over_fifty_seeds() {
    for seed in 0..50 {
        let mut r = common::rng(1000 + seed);
        let (agents, c) = common::random_market(&mut r, 6);
        let eq = solve_equilibrium(&common::island(), &agents, &c, &MarketConfig::default(), None, &mut common::rng(seed)).unwrap();
        let opt = lp_optimum(&agents, &c, 1.0).unwrap().unwrap().value;
        assert!(relative_gap(opt, eq.objective) <= 5e-2);
    }
}

#[test]
fn settlement_is_consistent() {
    let mut r = common::rng(34);
    for k in 0..100 {
        let (agents, c) = common::random_market(&mut r, 2 + k % 6);
        let out = run_market(&common::island(), &agents, &c, &MarketConfig::default(), None, k as u32, &mut common::rng(k as u64)).unwrap();
        out.log.verify().unwrap();
        let granted: f64 = out.grants.values().sum();
        assert!(granted <= c.rhs[0] + 1e-9);
        for d in &agents.demand {
            assert!(out.served[&d.id] <= d.load_max + 1e-9);
        }
        let mut storage: BTreeMap<_, _> = agents.storage.iter().map(|s| (s.id, s.clone())).collect();
        let mut demand: BTreeMap<_, _> = agents.demand.iter().map(|d| (d.id, d.clone())).collect();
        out.log.replay(&mut storage, &mut demand).unwrap();
        for s in &out.storage {
            assert_eq!(storage[&s.id].soc, s.soc);
            assert!(s.soc >= s.soc_min);
        }
    }
}
