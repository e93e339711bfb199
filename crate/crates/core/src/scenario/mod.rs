//! Scenario files and the slot-by-slot simulation driver.
//!
//! A scenario is a TOML document with the sections `run`, `topology`,
//! `agents`, `hazard` (optional), `market` and `metrics`. The schema is
//! documented field by field in the repository README. Unknown keys are
//! rejected so that typos surface as errors instead of silently falling back
//! to defaults.

mod output;
mod run;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::agents::{AgentError, AgentId, DemandAgentState, StorageAgentState};
use crate::hazard::{HazardError, HazardKind, HazardProcess, SpreadMethod};
use crate::market::{MarketConfig, MarketError, StepSchedule};
use crate::metrics::MetricsError;
use crate::topology::{GridTopology, Line, Region, RegionId, RegionSet, TopologyError};

pub use output::{write_outputs, OutputFormat};
pub use run::{oracle_check, run_scenario, IslandSolve, OracleEntry, OracleReport, RunResult, StoragePoint};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid value for {field}: {message}")]
    Validation { field: String, message: String },
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("slot {slot}: hazard: {source}")]
    Hazard { slot: u32, source: HazardError },
    #[error("slot {slot}, island {island}: market: {source}")]
    Market { slot: u32, island: usize, source: MarketError },
    #[error("slot {slot}: storage agent: {source}")]
    Agent { slot: u32, source: AgentError },
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("slot {slot}, island {island} has {agents} agents; the oracle handles at most {max}")]
    TooLargeForOracle { slot: u32, island: usize, agents: usize, max: usize },
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, message: impl fmt::Display) -> Self {
        ScenarioError::Validation {
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioError::Io { .. } => "io",
            ScenarioError::Parse { .. } => "parse",
            ScenarioError::Validation { .. } => "validation",
            ScenarioError::Topology(_) => "topology",
            ScenarioError::Hazard { .. } => "hazard",
            ScenarioError::Market { .. } => "market",
            ScenarioError::Agent { .. } => "agent",
            ScenarioError::Metrics(_) => "metrics",
            ScenarioError::TooLargeForOracle { .. } => "too_large_for_oracle",
        }
    }

    /// Machine-readable form, one JSON object.
    pub fn record(&self) -> serde_json::Value {
        let mut record = json!({ "error": self.kind(), "message": self.to_string() });
        let extra = match self {
            ScenarioError::Io { path, .. } => json!({ "path": path }),
            ScenarioError::Parse { line, column, .. } => json!({ "line": line, "column": column }),
            ScenarioError::Validation { field, .. } => json!({ "field": field }),
            ScenarioError::Hazard { slot, .. } | ScenarioError::Agent { slot, .. } => json!({ "slot": slot }),
            ScenarioError::Market { slot, island, .. } => json!({ "slot": slot, "island": island }),
            ScenarioError::TooLargeForOracle { slot, island, agents, .. } => {
                json!({ "slot": slot, "island": island, "agents": agents })
            }
            ScenarioError::Topology(_) | ScenarioError::Metrics(_) => json!({}),
        };
        if let (Some(r), Some(e)) = (record.as_object_mut(), extra.as_object()) {
            r.extend(e.clone());
        }
        record
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Islanding only; storage agents stay out of the market.
    Baseline,
    Resilient,
}

// ---- file schema ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    name: Option<String>,
    run: RunSection,
    topology: TopologySection,
    #[serde(default)]
    agents: AgentsSection,
    #[serde(default)]
    hazard: Option<HazardSection>,
    #[serde(default)]
    market: MarketSection,
    #[serde(default)]
    metrics: MetricsSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    horizon: u32,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_mode")]
    mode: Mode,
}

fn default_mode() -> Mode {
    Mode::Resilient
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologySection {
    #[serde(default)]
    main_grid_id: u32,
    regions: Vec<RegionSpec>,
    #[serde(default)]
    lines: Vec<LineSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionSpec {
    id: u32,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    base_demand: f64,
    #[serde(default = "one")]
    priority: f64,
    #[serde(default)]
    local_generation: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineSpec {
    from: u32,
    to: u32,
    capacity: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentsSection {
    #[serde(default)]
    demand: Vec<DemandSpec>,
    #[serde(default)]
    storage: Vec<StorageSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemandSpec {
    id: u32,
    region: u32,
    #[serde(default)]
    load_min: f64,
    load_max: f64,
    utility_weight: f64,
    #[serde(default)]
    energy_requirement: Option<f64>,
    #[serde(default = "yes")]
    interested: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StorageSpec {
    id: u32,
    region: u32,
    soc: f64,
    #[serde(default)]
    soc_min: f64,
    soc_max: f64,
    charge_limit: f64,
    discharge_limit: f64,
    #[serde(default = "one")]
    eta_c: f64,
    #[serde(default = "one")]
    eta_d: f64,
    #[serde(default)]
    degradation_cost: f64,
    #[serde(default = "yes")]
    interested: bool,
    #[serde(default)]
    min_incentive: f64,
    #[serde(default)]
    export_threshold: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HazardSection {
    kind: HazardKind,
    #[serde(default)]
    ignition: Option<Vec<u32>>,
    #[serde(default)]
    default_spread_prob: Option<f64>,
    #[serde(default)]
    spread: Vec<EdgeProb>,
    #[serde(default = "half")]
    intensity_decay: f64,
    #[serde(default = "three")]
    horizon: u32,
    #[serde(default = "thousand")]
    samples: usize,
    #[serde(default = "half")]
    threshold: f64,
    #[serde(default = "half")]
    smoothing: f64,
    #[serde(default)]
    method: Option<SpreadMethod>,
    onset_slot: u32,
    duration_slots: u32,
    #[serde(default)]
    repair_delay: u32,
    #[serde(default = "one_u32")]
    repairs_per_slot: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeProb {
    from: u32,
    to: u32,
    prob: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarketSection {
    #[serde(default = "xi_default")]
    xi: f64,
    #[serde(default = "max_iter_default")]
    max_iter: u32,
    #[serde(default)]
    step: Option<StepSchedule<f64>>,
    #[serde(default = "eps_default")]
    regularization: f64,
    #[serde(default = "eps_floor_default")]
    regularization_floor: f64,
}

impl Default for MarketSection {
    fn default() -> Self {
        Self {
            xi: xi_default(),
            max_iter: max_iter_default(),
            step: None,
            regularization: eps_default(),
            regularization_floor: eps_floor_default(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn one_u32() -> u32 {
    1
}
fn half() -> f64 {
    0.5
}
fn three() -> u32 {
    3
}
fn thousand() -> usize {
    1000
}
fn yes() -> bool {
    true
}
fn xi_default() -> f64 {
    1e-3
}
fn max_iter_default() -> u32 {
    10_000
}
fn eps_default() -> f64 {
    1e-2
}
fn eps_floor_default() -> f64 {
    1e-4
}

// ---- validated scenario ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    /// $/kWh
    #[serde(default = "voll_default")]
    pub voll: f64,
    #[serde(default = "one")]
    pub dt_hours: f64,
    #[serde(default = "threshold_default")]
    pub performance_threshold: f64,
}

fn voll_default() -> f64 {
    10.0
}
fn threshold_default() -> f64 {
    0.9
}

impl Default for MetricsSpec {
    fn default() -> Self {
        Self {
            voll: voll_default(),
            dt_hours: 1.0,
            performance_threshold: threshold_default(),
        }
    }
}

/// Hazard process plus its timing and the isolation policy.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardSpec {
    pub process: HazardProcess,
    /// Forecast look-ahead in slots.
    pub horizon: u32,
    pub samples: usize,
    pub method: SpreadMethod,
    /// Isolation threshold θ.
    pub threshold: f64,
    /// Risk smoothing α.
    pub smoothing: f64,
    /// First slot with burning regions.
    pub onset_slot: u32,
    pub duration_slots: u32,
    /// Slots after the hazard ends before crews start repairing.
    pub repair_delay: u32,
    pub repairs_per_slot: u32,
}

impl HazardSpec {
    pub fn active(&self, slot: u32) -> bool {
        slot >= self.onset_slot && slot - self.onset_slot < self.duration_slots
    }

    pub fn end_slot(&self) -> u32 {
        self.onset_slot.saturating_add(self.duration_slots)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub horizon: u32,
    pub seed: u64,
    pub mode: Mode,
    pub topology: GridTopology,
    pub demand: Vec<DemandAgentState<f64>>,
    pub storage: Vec<StorageAgentState<f64>>,
    pub hazard: Option<HazardSpec>,
    /// `dt` is taken from the metrics section.
    pub market: MarketConfig<f64>,
    pub metrics: MetricsSpec,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let fallback = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut scenario = parse_scenario(&text)?;
    if scenario.name.is_empty() {
        scenario.name = fallback;
    }
    Ok(scenario)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |span| line_col(text, span.start));
        ScenarioError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    validate(file)
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn check(ok: bool, field: impl Into<String>, message: &str) -> Result<(), ScenarioError> {
    if ok {
        Ok(())
    } else {
        Err(ScenarioError::invalid(field, message))
    }
}

fn finite_nonneg(v: f64, field: String) -> Result<(), ScenarioError> {
    check(v.is_finite() && v >= 0.0, field, "must be a finite non-negative number")
}

fn probability(v: f64, field: String) -> Result<(), ScenarioError> {
    check((0.0..=1.0).contains(&v), field, "must lie in [0, 1]")
}

fn validate(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    check(file.run.horizon >= 1, "run.horizon", "must be at least 1")?;

    let topo = &file.topology;
    for (k, r) in topo.regions.iter().enumerate() {
        finite_nonneg(r.base_demand, format!("topology.regions[{k}].base_demand"))?;
        finite_nonneg(r.priority, format!("topology.regions[{k}].priority"))?;
        finite_nonneg(r.local_generation, format!("topology.regions[{k}].local_generation"))?;
    }
    let regions = topo
        .regions
        .iter()
        .map(|r| Region {
            id: RegionId(r.id),
            name: r.name.clone().unwrap_or_else(|| format!("region-{}", r.id)),
            base_demand: r.base_demand,
            priority: r.priority,
            local_generation: r.local_generation,
        })
        .collect();
    let lines = topo
        .lines
        .iter()
        .map(|l| Line {
            from: RegionId(l.from),
            to: RegionId(l.to),
            capacity: l.capacity,
            is_main_tie: l.from == topo.main_grid_id || l.to == topo.main_grid_id,
        })
        .collect();
    let topology = GridTopology::new(regions, lines, RegionId(topo.main_grid_id))?;
    let known = topology.region_ids();
    let region_ref = |id: u32, field: String| -> Result<(), ScenarioError> {
        check(known.contains(&RegionId(id)), field, &format!("region {id} does not exist"))
    };

    let mut ids = BTreeSet::new();
    let mut demand = Vec::new();
    for (k, d) in file.agents.demand.iter().enumerate() {
        let at = |f: &str| format!("agents.demand[{k}].{f}");
        check(ids.insert(d.id), at("id"), "agent ids must be unique")?;
        region_ref(d.region, at("region"))?;
        finite_nonneg(d.load_min, at("load_min"))?;
        check(d.load_max.is_finite() && d.load_max >= d.load_min, at("load_max"), "must be at least load_min")?;
        finite_nonneg(d.utility_weight, at("utility_weight"))?;
        if let Some(e) = d.energy_requirement {
            finite_nonneg(e, at("energy_requirement"))?;
        }
        let mut state = DemandAgentState::new(d.id, d.region, d.load_min, d.load_max, d.utility_weight);
        state.energy_requirement = d.energy_requirement;
        state.interested = d.interested;
        demand.push(state);
    }
    let mut storage = Vec::new();
    for (k, s) in file.agents.storage.iter().enumerate() {
        let at = |f: &str| format!("agents.storage[{k}].{f}");
        check(ids.insert(s.id), at("id"), "agent ids must be unique")?;
        region_ref(s.region, at("region"))?;
        finite_nonneg(s.soc_min, at("soc_min"))?;
        check(s.soc_max.is_finite() && s.soc_max >= s.soc_min, at("soc_max"), "must be at least soc_min")?;
        check((s.soc_min..=s.soc_max).contains(&s.soc), at("soc"), "must lie in [soc_min, soc_max]")?;
        finite_nonneg(s.charge_limit, at("charge_limit"))?;
        finite_nonneg(s.discharge_limit, at("discharge_limit"))?;
        check(s.eta_c > 0.0 && s.eta_c <= 1.0, at("eta_c"), "must lie in (0, 1]")?;
        check(s.eta_d > 0.0 && s.eta_d <= 1.0, at("eta_d"), "must lie in (0, 1]")?;
        finite_nonneg(s.degradation_cost, at("degradation_cost"))?;
        finite_nonneg(s.min_incentive, at("min_incentive"))?;
        let mut state = StorageAgentState::new(s.id, s.region, s.soc, s.soc_min, s.soc_max, 0.0, s.degradation_cost);
        state.charge_limit = s.charge_limit;
        state.discharge_limit = s.discharge_limit;
        state.eta_c = s.eta_c;
        state.eta_d = s.eta_d;
        state.interested = s.interested;
        state.min_incentive = s.min_incentive;
        if let Some(th) = s.export_threshold {
            check(
                (s.soc_min..=s.soc_max).contains(&th),
                at("export_threshold"),
                "must lie in [soc_min, soc_max]",
            )?;
            state.export_threshold = th;
        }
        storage.push(state);
    }

    let hazard = file.hazard.map(|h| validate_hazard(h, &known)).transpose()?;

    let m = &file.market;
    check(m.xi.is_finite() && m.xi > 0.0, "market.xi", "must be positive")?;
    check(m.max_iter >= 1, "market.max_iter", "must be at least 1")?;
    if let Some(step) = m.step {
        check(step.c0().is_finite() && step.c0() > 0.0, "market.step.c0", "must be positive")?;
    }
    finite_nonneg(m.regularization, "market.regularization".into())?;
    finite_nonneg(m.regularization_floor, "market.regularization_floor".into())?;

    let metrics = file.metrics;
    finite_nonneg(metrics.voll, "metrics.voll".into())?;
    check(
        metrics.dt_hours.is_finite() && metrics.dt_hours > 0.0,
        "metrics.dt_hours",
        "must be positive",
    )?;
    probability(metrics.performance_threshold, "metrics.performance_threshold".into())?;

    let market = MarketConfig {
        xi: m.xi,
        max_iter: m.max_iter,
        schedule: m.step,
        regularization: m.regularization,
        regularization_floor: m.regularization_floor,
        dt: metrics.dt_hours,
        ..MarketConfig::default()
    };

    Ok(Scenario {
        name: file.name.unwrap_or_default(),
        horizon: file.run.horizon,
        seed: file.run.seed,
        mode: file.run.mode,
        topology,
        demand,
        storage,
        hazard,
        market,
        metrics,
    })
}

fn validate_hazard(h: HazardSection, known: &RegionSet) -> Result<HazardSpec, ScenarioError> {
    let ignition: RegionSet = match (&h.ignition, h.kind) {
        (Some(list), _) => {
            for (k, &id) in list.iter().enumerate() {
                check(
                    known.contains(&RegionId(id)),
                    format!("hazard.ignition[{k}]"),
                    &format!("region {id} does not exist"),
                )?;
            }
            list.iter().map(|&id| RegionId(id)).collect()
        }
        // a hurricane makes landfall everywhere at once
        (None, HazardKind::Hurricane) => known.clone(),
        (None, HazardKind::Wildfire) => {
            return Err(ScenarioError::invalid("hazard.ignition", "required for wildfires"));
        }
    };
    let mut process = HazardProcess::new(h.kind, ignition);
    if let Some(p) = h.default_spread_prob {
        probability(p, "hazard.default_spread_prob".into())?;
        process = process.with_default_prob(p);
    }
    for (k, e) in h.spread.iter().enumerate() {
        probability(e.prob, format!("hazard.spread[{k}].prob"))?;
        for (end, id) in [("from", e.from), ("to", e.to)] {
            check(
                known.contains(&RegionId(id)),
                format!("hazard.spread[{k}].{end}"),
                &format!("region {id} does not exist"),
            )?;
        }
        process = process.with_edge_prob(RegionId(e.from), RegionId(e.to), e.prob);
    }
    check(
        h.intensity_decay > 0.0 && h.intensity_decay <= 1.0,
        "hazard.intensity_decay",
        "must lie in (0, 1]",
    )?;
    process.intensity_decay = h.intensity_decay;
    check(h.samples >= 1, "hazard.samples", "must be at least 1")?;
    probability(h.threshold, "hazard.threshold".into())?;
    check(h.smoothing > 0.0 && h.smoothing <= 1.0, "hazard.smoothing", "must lie in (0, 1]")?;
    check(h.repairs_per_slot >= 1, "hazard.repairs_per_slot", "must be at least 1")?;
    let method = h.method.unwrap_or(SpreadMethod::MonteCarlo);
    if method == SpreadMethod::Exact {
        check(
            known.len() <= crate::hazard::EXACT_MAX_REGIONS,
            "hazard.method",
            "exact forecasting supports at most 15 regions",
        )?;
    }
    Ok(HazardSpec {
        process,
        horizon: h.horizon,
        samples: h.samples,
        method,
        threshold: h.threshold,
        smoothing: h.smoothing,
        onset_slot: h.onset_slot,
        duration_slots: h.duration_slots,
        repair_delay: h.repair_delay,
        repairs_per_slot: h.repairs_per_slot,
    })
}

impl Scenario {
    pub fn agent_count(&self) -> usize {
        self.demand.len() + self.storage.len()
    }

    pub fn agent_ids(&self) -> BTreeSet<AgentId> {
        self.demand.iter().map(|d| d.id).chain(self.storage.iter().map(|s| s.id)).collect()
    }
}
