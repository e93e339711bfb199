use std::collections::BTreeMap;

use serde::Serialize;

use super::{Mode, Scenario, ScenarioError};
use crate::agents::{AgentId, StorageAgentState};
use crate::hazard::{
    exact_spread_probability, score_risk, select_isolation_set, simulate_spread_with, spread_step, synthesize_readings,
    HazardProcess, SpreadMethod,
};
use crate::market::{
    allocate_power, lp_optimum, relative_gap, run_market, AllocationRequest, CouplingConstraint, MarketAgents,
    MarketEquilibrium, TransactionLog, ORACLE_MAX_AGENTS,
};
use crate::metrics::{
    build_timeline, eight_point_approx, resilience_report, EightPointCurve, PerformanceSample, RegionLoad,
    ResilienceReport,
};
use crate::rng;
use crate::topology::{RegionId, RegionSet};

/// One market solved for one connected component in one slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IslandSolve {
    pub slot: u32,
    /// Position of the component in the slot's partition, grid-connected first.
    pub island: usize,
    pub regions: Vec<RegionId>,
    pub grid_connected: bool,
    /// kW left for the market after base load.
    pub import_capacity: f64,
    pub export_capacity: f64,
    pub equilibrium: MarketEquilibrium<f64>,
    pub log: TransactionLog<f64>,
    #[serde(skip)]
    pub agents: MarketAgents<f64>,
    #[serde(skip)]
    pub constraint: CouplingConstraint<f64>,
}

/// State of charge of one storage agent across one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StoragePoint {
    pub slot: u32,
    pub agent: AgentId,
    pub soc_before: f64,
    /// kWh delivered at the terminals through committed offers.
    pub delivered: f64,
    pub eta_d: f64,
    pub soc_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub slot: u32,
    pub damaged: Vec<RegionId>,
    pub isolated: Vec<RegionId>,
    pub components: usize,
    /// kW available to each component, summed.
    pub supply: f64,
    pub loads: BTreeMap<RegionId, RegionLoad<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub scenario: String,
    pub seed: u64,
    pub mode: Mode,
    pub slots: Vec<SlotRecord>,
    pub solves: Vec<IslandSolve>,
    pub storage: Vec<StoragePoint>,
    pub timeline: Vec<PerformanceSample<f64>>,
    pub curve: EightPointCurve<f64>,
    pub report: ResilienceReport<f64>,
}

/// Hazard progression: what is burning and what has been cut off.
struct HazardState {
    damaged: RegionSet,
    isolated: RegionSet,
    stream: rand_chacha::ChaCha8Rng,
}

impl HazardState {
    fn advance(&mut self, scenario: &Scenario, slot: u32) -> Result<(), ScenarioError> {
        let Some(h) = &scenario.hazard else {
            return Ok(());
        };
        let topology = &scenario.topology;
        let err = |source| ScenarioError::Hazard { slot, source };
        if h.active(slot) {
            self.damaged = if slot == h.onset_slot {
                h.process.ignition_set.clone()
            } else {
                spread_step(&h.process, topology, &self.damaged, &mut self.stream)
            };
            let readings = synthesize_readings(topology, &self.damaged, h.process.intensity_decay, slot);
            let risk = score_risk(&readings, topology, h.smoothing).map_err(err)?;
            let process = HazardProcess {
                ignition_set: self.damaged.clone(),
                ..h.process.clone()
            };
            let forecast = match h.method {
                SpreadMethod::MonteCarlo => {
                    let mut stream = rng::substream(scenario.seed, rng::FORECAST, u64::from(slot));
                    simulate_spread_with(&process, topology, h.horizon, h.samples, &mut stream)
                }
                SpreadMethod::Exact => exact_spread_probability(&process, topology, h.horizon),
            }
            .map_err(err)?;
            self.isolated.extend(select_isolation_set(&forecast, &risk, h.threshold));
        } else if slot >= h.end_slot() {
            self.isolated.clear();
            if slot >= h.end_slot().saturating_add(h.repair_delay) {
                let mut queue: Vec<_> = self
                    .damaged
                    .iter()
                    .map(|&id| (topology.region(id).map_or(0.0, |r| r.priority), id))
                    .collect();
                queue.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                for (_, id) in queue.into_iter().take(h.repairs_per_slot as usize) {
                    self.damaged.remove(&id);
                }
            }
        }
        Ok(())
    }
}

pub fn run_scenario(scenario: &Scenario) -> Result<RunResult, ScenarioError> {
    let topology = &scenario.topology;
    let priorities: BTreeMap<RegionId, f64> = topology.regions().map(|r| (r.id, r.priority)).collect();

    let mut hazard = HazardState {
        damaged: RegionSet::new(),
        isolated: RegionSet::new(),
        stream: rng::substream(scenario.seed, rng::HAZARD, 0),
    };
    let mut storage: BTreeMap<AgentId, StorageAgentState<f64>> =
        scenario.storage.iter().map(|s| (s.id, s.clone())).collect();
    let mut warm: BTreeMap<Vec<RegionId>, MarketEquilibrium<f64>> = BTreeMap::new();

    let mut demanded: BTreeMap<RegionId, f64> = topology.regions().map(|r| (r.id, r.base_demand)).collect();
    for d in &scenario.demand {
        *demanded.entry(d.region_id).or_default() += d.load_max;
    }

    let mut slots = Vec::new();
    let mut solves = Vec::new();
    let mut trajectory = Vec::new();
    for slot in 0..scenario.horizon {
        hazard.advance(scenario, slot)?;
        let cut: RegionSet = hazard.isolated.difference(&hazard.damaged).copied().collect();
        let partition = topology.isolate_with_outages(&cut, &hazard.damaged)?;

        let mut served: BTreeMap<RegionId, f64> = topology.region_ids().into_iter().map(|id| (id, 0.0)).collect();
        let mut total_supply = 0.0;
        for (island, (component, grid_connected)) in partition.components().enumerate() {
            let live: RegionSet = component.difference(&hazard.damaged).copied().collect();
            if live.is_empty() {
                continue;
            }
            let regions = || live.iter().filter_map(|&id| topology.region(id));
            let ties: f64 = if grid_connected {
                live.iter().map(|&id| topology.tie_capacity(id)).sum()
            } else {
                0.0
            };
            let supply = ties + regions().map(|r| r.local_generation).sum::<f64>();
            total_supply += supply;

            let base: BTreeMap<RegionId, AllocationRequest<f64>> = regions()
                .map(|r| (r.id, AllocationRequest::new(r.base_demand).with_priority(r.priority)))
                .collect();
            let base_grants = allocate_power(&base, supply);
            for (id, g) in &base_grants {
                *served.entry(*id).or_default() += g;
            }
            let import = (supply - base_grants.values().sum::<f64>()).max(0.0);

            let agents = MarketAgents {
                demand: scenario
                    .demand
                    .iter()
                    .filter(|d| live.contains(&d.region_id))
                    .cloned()
                    .collect(),
                storage: match scenario.mode {
                    Mode::Resilient => storage.values().filter(|s| live.contains(&s.region_id)).cloned().collect(),
                    Mode::Baseline => Vec::new(),
                },
                priorities: priorities.clone(),
            };
            if agents.is_empty() {
                continue;
            }
            let constraint = CouplingConstraint::supply_balance(&agents, import, ties);
            let key: Vec<RegionId> = live.iter().copied().collect();
            let mut stream = rng::substream(scenario.seed, rng::INIT, (u64::from(slot) << 32) | island as u64);
            let outcome = run_market(
                &live,
                &agents,
                &constraint,
                &scenario.market,
                warm.get(&key),
                slot,
                &mut stream,
            )
            .map_err(|source| ScenarioError::Market { slot, island, source })?;

            let mut delivered: BTreeMap<AgentId, f64> = BTreeMap::new();
            for o in outcome.log.committed() {
                *delivered.entry(o.from_dsa).or_default() += o.quantity;
            }
            for s in &outcome.storage {
                let before = storage[&s.id].soc;
                trajectory.push(StoragePoint {
                    slot,
                    agent: s.id,
                    soc_before: before,
                    delivered: delivered.get(&s.id).copied().unwrap_or(0.0),
                    eta_d: s.eta_d,
                    soc_after: s.soc,
                });
                if s.soc < s.soc_min || s.soc > s.soc_max {
                    return Err(ScenarioError::Agent {
                        slot,
                        source: crate::agents::AgentError::SocBoundViolation {
                            agent: s.id,
                            soc: s.soc,
                            min: s.soc_min,
                            max: s.soc_max,
                        },
                    });
                }
                storage.insert(s.id, s.clone());
            }
            for d in &outcome.demand {
                *served.entry(d.region_id).or_default() += outcome.served[&d.id];
            }
            warm.insert(key, outcome.equilibrium.clone());
            solves.push(IslandSolve {
                slot,
                island,
                regions: live.iter().copied().collect(),
                grid_connected,
                import_capacity: import,
                export_capacity: ties,
                equilibrium: outcome.equilibrium,
                log: outcome.log,
                agents,
                constraint,
            });
        }

        let loads = demanded
            .iter()
            .map(|(&id, &demand)| {
                let s = served.get(&id).copied().unwrap_or(0.0).min(demand);
                (id, RegionLoad { served: s, demanded: demand })
            })
            .collect();
        slots.push(SlotRecord {
            slot,
            damaged: hazard.damaged.iter().copied().collect(),
            isolated: cut.iter().copied().collect(),
            components: partition.islands.len() + partition.grid_components.len(),
            supply: total_supply,
            loads,
        });
    }

    let per_slot: Vec<(u32, Vec<RegionLoad<f64>>)> = slots
        .iter()
        .map(|s| (s.slot, s.loads.values().copied().collect()))
        .collect();
    let timeline = build_timeline(&per_slot)?;
    let curve = eight_point_approx(&timeline)?;
    let m = &scenario.metrics;
    let report = resilience_report(&timeline, m.dt_hours, m.voll, m.performance_threshold)?;
    Ok(RunResult {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        mode: scenario.mode,
        slots,
        solves,
        storage: trajectory,
        timeline,
        curve,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleEntry {
    pub slot: u32,
    pub island: usize,
    pub agents: usize,
    /// `None` when the centralized problem is infeasible.
    pub optimum: Option<f64>,
    pub objective: f64,
    pub gap: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub scenario: String,
    pub entries: Vec<OracleEntry>,
    pub max_gap: f64,
}

/// Runs the scenario and compares every market solve against the centralized
/// LP optimum.
pub fn oracle_check(scenario: &Scenario) -> Result<OracleReport, ScenarioError> {
    let result = run_scenario(scenario)?;
    let mut entries = Vec::with_capacity(result.solves.len());
    for solve in &result.solves {
        let agents = solve.agents.len();
        if agents > ORACLE_MAX_AGENTS {
            return Err(ScenarioError::TooLargeForOracle {
                slot: solve.slot,
                island: solve.island,
                agents,
                max: ORACLE_MAX_AGENTS,
            });
        }
        let market_err = |source| ScenarioError::Market {
            slot: solve.slot,
            island: solve.island,
            source,
        };
        let optimum = lp_optimum(&solve.agents, &solve.constraint, scenario.metrics.dt_hours)
            .map_err(market_err)?
            .map(|s| s.value);
        let objective = solve.equilibrium.objective;
        entries.push(OracleEntry {
            slot: solve.slot,
            island: solve.island,
            agents,
            optimum,
            objective,
            gap: optimum.map(|opt| relative_gap(opt, objective)),
            converged: solve.equilibrium.converged,
        });
    }
    let max_gap = entries.iter().filter_map(|e| e.gap).fold(0.0, f64::max);
    Ok(OracleReport {
        scenario: scenario.name.clone(),
        entries,
        max_gap,
    })
}
