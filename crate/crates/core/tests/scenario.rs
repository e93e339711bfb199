use std::collections::BTreeMap;
use std::path::PathBuf;

use gridres::agents::{AgentId, DemandAgentState, OfferStatus};
use gridres::scenario::{load_scenario, oracle_check, run_scenario, Mode, Scenario, ScenarioError};

fn bundled(name: &str) -> Scenario {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "scenarios", &format!("{name}.toml")].iter().collect();
    load_scenario(path).unwrap()
}

#[test]
fn wildfire_fixture_counts() {
    let s = bundled("two_island_wildfire");
    assert_eq!(s.topology.len(), 6);
    assert_eq!(s.storage.len(), 3);
    assert_eq!(s.demand.len(), 4);
    assert_eq!(s.name, "two_island_wildfire");
}

#[test]
fn every_bundled_scenario_runs() {
    let dir: PathBuf = [env!("CARGO_MANIFEST_DIR"), "scenarios"].iter().collect();
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let s = load_scenario(entry.unwrap().path()).unwrap();
        let r = run_scenario(&s).unwrap();
        assert_eq!(r.timeline.len(), s.horizon as usize);
        assert!(r.solves.iter().all(|x| x.equilibrium.converged), "{}", s.name);
        count += 1;
    }
    assert!(count >= 3);
}

#[test]
fn slack_single_slot_is_lossless() {
    let s = bundled("minimal");
    assert_eq!(s.horizon, 1);
    let r = run_scenario(&s).unwrap();
    assert!(r.timeline.iter().all(|p| p.index == 1.0));
    assert_eq!(r.report.monetary_loss, 0.0);
    assert_eq!(r.report.loss_area, 0.0);
}

#[test]
fn storage_improves_the_wildfire_run() {
    let mut s = bundled("two_island_wildfire");
    let resilient = run_scenario(&s).unwrap();
    s.mode = Mode::Baseline;
    let baseline = run_scenario(&s).unwrap();
    assert!(resilient.report.p_min >= baseline.report.p_min);
    assert!(resilient.report.loss_area <= baseline.report.loss_area);
    assert!(resilient.report.monetary_loss <= baseline.report.monetary_loss);
    assert!(baseline.solves.iter().all(|x| x.log.events.is_empty()));
    // the hazard does not depend on the mode
    let damaged = |r: &gridres::scenario::RunResult| r.slots.iter().map(|s| s.damaged.clone()).collect::<Vec<_>>();
    assert_eq!(damaged(&resilient), damaged(&baseline));
}

#[test]
fn same_seed_same_result() {
    let s = bundled("two_island_wildfire");
    let a = serde_json::to_string(&run_scenario(&s).unwrap()).unwrap();
    let b = serde_json::to_string(&run_scenario(&s).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn extra_agents_leave_the_hazard_alone() {
    let s = bundled("two_island_wildfire");
    let mut more = s.clone();
    more.demand.push(DemandAgentState::new(99, 6, 0.0, 2.0, 1.0));
    let (a, b) = (run_scenario(&s).unwrap(), run_scenario(&more).unwrap());
    for (x, y) in a.slots.iter().zip(&b.slots) {
        assert_eq!(x.damaged, y.damaged);
        assert_eq!(x.isolated, y.isolated);
    }
}

#[test]
fn served_never_exceeds_supply() {
    for name in ["two_island_wildfire", "hurricane_coast", "scarce_pair"] {
        let s = bundled(name);
        let dt = s.metrics.dt_hours;
        let r = run_scenario(&s).unwrap();
        for slot in &r.slots {
            let served: f64 = slot.loads.values().map(|l| l.served).sum();
            let storage: f64 = r.storage.iter().filter(|p| p.slot == slot.slot).map(|p| p.delivered / dt).sum();
            assert!(served <= slot.supply + storage + 1e-9, "{name} slot {}", slot.slot);
            for l in slot.loads.values() {
                assert!(l.served <= l.demanded + 1e-9);
            }
        }
    }
}

#[test]
fn transactions_match_soc_trajectories() {
    let s = bundled("two_island_wildfire");
    let r = run_scenario(&s).unwrap();
    let mut committed: BTreeMap<(u32, AgentId), f64> = BTreeMap::new();
    for solve in &r.solves {
        solve.log.verify().unwrap();
        for o in solve.log.final_offers() {
            if o.status == OfferStatus::Committed {
                *committed.entry((solve.slot, o.from_dsa)).or_default() += o.quantity;
            }
        }
    }
    assert!(!committed.is_empty());
    let mut soc: BTreeMap<AgentId, f64> = s.storage.iter().map(|x| (x.id, x.soc)).collect();
    for p in &r.storage {
        assert_eq!(p.soc_before, soc[&p.agent]);
        assert_eq!(p.delivered, committed.get(&(p.slot, p.agent)).copied().unwrap_or(0.0));
        let expected = p.soc_before - p.delivered / p.eta_d;
        assert!((p.soc_after - expected).abs() <= 1e-12 * p.soc_before.max(1.0));
        soc.insert(p.agent, p.soc_after);
    }
}

#[test]
fn oracle_examples() {
    assert_eq!(oracle_check(&bundled("minimal")).unwrap().max_gap, 0.0);
    let pair = oracle_check(&bundled("scarce_pair")).unwrap();
    assert!(!pair.entries.is_empty());
    assert!(pair.max_gap <= 1e-2);
    assert!(matches!(
        oracle_check(&bundled("two_island_wildfire")),
        Err(ScenarioError::TooLargeForOracle { agents: 7, .. })
    ));
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_scenario("/nonexistent/scenario.toml").unwrap_err();
    assert_eq!(err.record()["error"], "io");
}
