#![allow(dead_code)]

use std::collections::BTreeMap;

use gridres::agents::{DemandAgentState, StorageAgentState};
use gridres::market::{CouplingConstraint, MarketAgents};
use gridres::topology::{build_topology, GridTopology, Line, Region, RegionId, RegionSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random feasible island market with `n` agents, at least one of them demand.
pub fn random_market(r: &mut ChaCha8Rng, n: usize) -> (MarketAgents<f64>, CouplingConstraint<f64>) {
    let nd = r.random_range(1..=n);
    let mut agents = MarketAgents::default();
    for i in 0..nd {
        let load_min = if r.random_bool(0.5) { 0.0 } else { r.random_range(0.0..1.0) };
        let load_max = load_min + r.random_range(1.0..8.0);
        let w = r.random_range(0.2..2.0);
        agents.demand.push(DemandAgentState::new(i as u32 + 1, 1, load_min, load_max, w));
    }
    for j in nd..n {
        let soc_max = r.random_range(10.0..40.0);
        let soc_min = 0.1 * soc_max;
        let soc = r.random_range(soc_min..soc_max);
        let mut s = StorageAgentState::new(j as u32 + 1, 1, soc, soc_min, soc_max, r.random_range(1.0..5.0), r.random_range(0.01..0.3));
        s.eta_c = r.random_range(0.85..1.0);
        s.eta_d = r.random_range(0.85..1.0);
        agents.storage.push(s);
    }
    let floor: f64 = agents.demand.iter().map(|d| d.load_min).sum();
    let import = r.random_range(0.0..10.0f64).max(floor);
    let export = r.random_range(0.0..5.0);
    let constraint = CouplingConstraint::supply_balance(&agents, import, export);
    (agents, constraint)
}

pub fn island() -> RegionSet {
    RegionSet::from([RegionId(1)])
}

/// Connected random graph on `n` regions: a random spanning tree plus extra edges.
pub fn random_graph(r: &mut ChaCha8Rng, n: u32, extra: usize) -> GridTopology {
    let regions = (1..=n).map(|i| Region::new(i, format!("R{i}"), 1.0)).collect();
    let mut edges = BTreeMap::new();
    for v in 2..=n {
        let u = r.random_range(1..v);
        edges.insert((u, v), ());
    }
    for _ in 0..extra {
        let a = r.random_range(1..=n);
        let b = r.random_range(1..=n);
        if a != b {
            edges.insert((a.min(b), a.max(b)), ());
        }
    }
    let lines = edges.keys().map(|&(a, b)| Line::new(a, b, 10.0)).collect();
    build_topology(regions, lines).unwrap()
}
