//! Hazard sensing, risk scoring and spread forecasting over the region graph.
//!
//! Spread is an independent-cascade process: every slot, each burning region
//! gets one Bernoulli draw per line to each non-burning neighbour. Burning is
//! absorbing. The Monte Carlo forecaster and the exact subset dynamic program
//! describe the same process, so the latter serves as an oracle for the former.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::topology::{GridTopology, RegionId, RegionSet};

/// Largest region count accepted by [`exact_spread_probability`].
pub const EXACT_MAX_REGIONS: usize = 15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HazardError {
    #[error("unknown region {0}")]
    UnknownRegion(RegionId),
    #[error("sensor intensity {0} outside [0, 1]")]
    InvalidIntensity(f64),
    #[error("smoothing factor {0} outside (0, 1]")]
    InvalidSmoothing(f64),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("exact spread enumeration supports at most {max} regions, got {regions}")]
    TooLarge { regions: usize, max: usize },
    #[error("sample count must be at least 1")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HazardKind {
    Wildfire,
    Hurricane,
}

impl HazardKind {
    /// Per-slot spread probability used for lines without an explicit value.
    pub fn default_spread_prob(self) -> f64 {
        match self {
            HazardKind::Wildfire => 0.3,
            HazardKind::Hurricane => 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub region_id: RegionId,
    pub timestamp: u32,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskMap {
    pub scores: BTreeMap<RegionId, f64>,
    pub timestamp: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpreadMethod {
    MonteCarlo,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpreadForecast {
    pub horizon: u32,
    pub prob_affected: BTreeMap<RegionId, f64>,
    pub method: SpreadMethod,
    pub sample_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazardProcess {
    pub kind: HazardKind,
    pub ignition_set: RegionSet,
    /// Per-line overrides keyed by the unordered endpoint pair (smaller id first).
    pub edge_spread_prob: BTreeMap<(RegionId, RegionId), f64>,
    pub default_spread_prob: f64,
    /// Per-hop multiplier applied to sensor intensity away from burning regions.
    pub intensity_decay: f64,
}

impl HazardProcess {
    pub fn new(kind: HazardKind, ignition_set: RegionSet) -> Self {
        Self {
            kind,
            ignition_set,
            edge_spread_prob: BTreeMap::new(),
            default_spread_prob: kind.default_spread_prob(),
            intensity_decay: 0.5,
        }
    }

    pub fn with_default_prob(mut self, p: f64) -> Self {
        self.default_spread_prob = p;
        self
    }

    pub fn with_edge_prob(mut self, a: RegionId, b: RegionId, p: f64) -> Self {
        self.edge_spread_prob.insert(edge_key(a, b), p);
        self
    }

    pub fn spread_prob(&self, a: RegionId, b: RegionId) -> f64 {
        self.edge_spread_prob
            .get(&edge_key(a, b))
            .copied()
            .unwrap_or(self.default_spread_prob)
    }

    fn validate(&self, topology: &GridTopology) -> Result<(), HazardError> {
        for &id in &self.ignition_set {
            if topology.region(id).is_none() {
                return Err(HazardError::UnknownRegion(id));
            }
        }
        let probs = self.edge_spread_prob.values().chain(std::iter::once(&self.default_spread_prob));
        for &p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(HazardError::InvalidProbability(p));
            }
        }
        Ok(())
    }
}

fn edge_key(a: RegionId, b: RegionId) -> (RegionId, RegionId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Dense view of the region graph with per-edge spread probabilities.
struct SpreadGraph {
    ids: Vec<RegionId>,
    /// `edges[v]` lists `(u, p)`: burning `u` ignites `v` with probability `p`.
    edges: Vec<Vec<(usize, f64)>>,
}

impl SpreadGraph {
    fn new(process: &HazardProcess, topology: &GridTopology) -> Self {
        let ids: Vec<RegionId> = topology.region_ids().into_iter().collect();
        let index: BTreeMap<RegionId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let edges = ids
            .iter()
            .map(|&v| {
                topology
                    .neighbors(v)
                    .iter()
                    .map(|&(u, _)| (index[&u], process.spread_prob(u, v)))
                    .collect()
            })
            .collect();
        Self { ids, edges }
    }

    fn mask_of(&self, set: &RegionSet) -> Vec<bool> {
        self.ids.iter().map(|id| set.contains(id)).collect()
    }

    /// One slot of the cascade on a dense burning vector.
    fn step<R: Rng + ?Sized>(&self, burning: &mut [bool], scratch: &mut Vec<usize>, rng: &mut R) {
        scratch.clear();
        for (v, incoming) in self.edges.iter().enumerate() {
            if burning[v] {
                continue;
            }
            let mut ignited = false;
            for &(u, p) in incoming {
                // One draw per burning neighbour, even after ignition, so the
                // stream consumption does not depend on draw outcomes.
                if burning[u] && rng.random::<f64>() < p {
                    ignited = true;
                }
            }
            if ignited {
                scratch.push(v);
            }
        }
        for &v in scratch.iter() {
            burning[v] = true;
        }
    }
}

/// Advances a burning set by one slot.
pub fn spread_step<R: Rng + ?Sized>(
    process: &HazardProcess,
    topology: &GridTopology,
    burning: &RegionSet,
    rng: &mut R,
) -> RegionSet {
    let graph = SpreadGraph::new(process, topology);
    let mut state = graph.mask_of(burning);
    graph.step(&mut state, &mut Vec::new(), rng);
    graph
        .ids
        .iter()
        .zip(state)
        .filter_map(|(&id, b)| b.then_some(id))
        .collect()
}

/// Synthetic sensor field: 1 on burning regions, multiplied by
/// `intensity_decay` per hop away from the nearest burning region.
pub fn synthesize_readings(
    topology: &GridTopology,
    burning: &RegionSet,
    intensity_decay: f64,
    timestamp: u32,
) -> Vec<SensorReading> {
    let mut intensity: BTreeMap<RegionId, f64> = topology.region_ids().into_iter().map(|id| (id, 0.0)).collect();
    let mut frontier: Vec<RegionId> = burning.iter().copied().collect();
    for id in &frontier {
        intensity.insert(*id, 1.0);
    }
    let mut level = 1.0;
    while !frontier.is_empty() {
        level *= intensity_decay;
        if level < 1e-3 {
            break;
        }
        let mut next = Vec::new();
        for &u in &frontier {
            for &(v, _) in topology.neighbors(u) {
                let slot = intensity.get_mut(&v).expect("neighbour is a region");
                if *slot < level {
                    *slot = level;
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    intensity
        .into_iter()
        .map(|(region_id, intensity)| SensorReading {
            region_id,
            timestamp,
            intensity,
        })
        .collect()
}

/// Blends each region's latest reading with the mean of its neighbours'.
///
/// A region without a reading counts as 0. A region without neighbours keeps
/// its own intensity.
pub fn score_risk(readings: &[SensorReading], topology: &GridTopology, smoothing: f64) -> Result<RiskMap, HazardError> {
    if !(smoothing > 0.0 && smoothing <= 1.0) {
        return Err(HazardError::InvalidSmoothing(smoothing));
    }
    let mut latest: BTreeMap<RegionId, (u32, f64)> = BTreeMap::new();
    for r in readings {
        if topology.region(r.region_id).is_none() {
            return Err(HazardError::UnknownRegion(r.region_id));
        }
        if !(0.0..=1.0).contains(&r.intensity) {
            return Err(HazardError::InvalidIntensity(r.intensity));
        }
        match latest.get(&r.region_id) {
            Some(&(ts, _)) if ts > r.timestamp => {}
            _ => {
                latest.insert(r.region_id, (r.timestamp, r.intensity));
            }
        }
    }
    let value = |id: RegionId| latest.get(&id).map_or(0.0, |&(_, v)| v);
    let scores = topology
        .region_ids()
        .into_iter()
        .map(|id| {
            let own = value(id);
            let neighbors = topology.neighbors(id);
            let around = if neighbors.is_empty() {
                own
            } else {
                neighbors.iter().map(|&(n, _)| value(n)).sum::<f64>() / neighbors.len() as f64
            };
            (id, smoothing * own + (1.0 - smoothing) * around)
        })
        .collect();
    let timestamp = latest.values().map(|&(ts, _)| ts).max().unwrap_or(0);
    Ok(RiskMap { scores, timestamp })
}

/// Empirical probability that each region is burning within `horizon` slots.
pub fn simulate_spread(
    process: &HazardProcess,
    topology: &GridTopology,
    horizon: u32,
    samples: usize,
    seed: u64,
) -> Result<SpreadForecast, HazardError> {
    let mut rng = rng::substream(seed, rng::FORECAST, u64::from(horizon));
    simulate_spread_with(process, topology, horizon, samples, &mut rng)
}

/// [`simulate_spread`] drawing from a caller-supplied stream.
pub fn simulate_spread_with<R: Rng + ?Sized>(
    process: &HazardProcess,
    topology: &GridTopology,
    horizon: u32,
    samples: usize,
    rng: &mut R,
) -> Result<SpreadForecast, HazardError> {
    if samples == 0 {
        return Err(HazardError::NoSamples);
    }
    process.validate(topology)?;
    let graph = SpreadGraph::new(process, topology);
    let initial = graph.mask_of(&process.ignition_set);
    let mut hits = vec![0usize; graph.ids.len()];
    let mut state = initial.clone();
    let mut scratch = Vec::new();
    for _ in 0..samples {
        state.copy_from_slice(&initial);
        for _ in 0..horizon {
            graph.step(&mut state, &mut scratch, rng);
        }
        for (h, &b) in hits.iter_mut().zip(&state) {
            *h += usize::from(b);
        }
    }
    let prob_affected = graph
        .ids
        .iter()
        .zip(hits)
        .map(|(&id, h)| (id, h as f64 / samples as f64))
        .collect();
    Ok(SpreadForecast {
        horizon,
        prob_affected,
        method: SpreadMethod::MonteCarlo,
        sample_count: Some(samples),
    })
}

/// Exact reach probabilities by propagating the distribution over burning
/// sets, one slot at a time.
pub fn exact_spread_probability(
    process: &HazardProcess,
    topology: &GridTopology,
    horizon: u32,
) -> Result<SpreadForecast, HazardError> {
    let n = topology.len();
    if n > EXACT_MAX_REGIONS {
        return Err(HazardError::TooLarge {
            regions: n,
            max: EXACT_MAX_REGIONS,
        });
    }
    process.validate(topology)?;
    let graph = SpreadGraph::new(process, topology);
    let start: usize = graph
        .mask_of(&process.ignition_set)
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| 1 << i)
        .sum();

    let mut dist = vec![0.0f64; 1 << n];
    dist[start] = 1.0;
    let mut branches: Vec<(usize, f64)> = Vec::new();
    for _ in 0..horizon {
        let mut next = vec![0.0f64; 1 << n];
        for (mask, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            branches.clear();
            branches.push((mask, mass));
            for v in (0..n).filter(|v| mask & (1 << v) == 0) {
                let survive: f64 = graph.edges[v]
                    .iter()
                    .filter(|&&(u, _)| mask & (1 << u) != 0)
                    .map(|&(_, p)| 1.0 - p)
                    .product();
                let ignite = 1.0 - survive;
                if ignite == 0.0 {
                    continue;
                }
                let len = branches.len();
                for k in 0..len {
                    let (m, w) = branches[k];
                    branches[k] = (m, w * survive);
                    branches.push((m | (1 << v), w * ignite));
                }
            }
            for &(m, w) in &branches {
                next[m] += w;
            }
        }
        dist = next;
    }

    let mut prob = vec![0.0f64; n];
    for (mask, &mass) in dist.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for (v, p) in prob.iter_mut().enumerate() {
            if mask & (1 << v) != 0 {
                *p += mass;
            }
        }
    }
    let prob_affected = graph
        .ids
        .iter()
        .zip(prob)
        .map(|(&id, p)| (id, p.clamp(0.0, 1.0)))
        .collect();
    Ok(SpreadForecast {
        horizon,
        prob_affected,
        method: SpreadMethod::Exact,
        sample_count: None,
    })
}

/// Regions whose forecast probability or current risk score reaches `threshold`.
pub fn select_isolation_set(forecast: &SpreadForecast, risk: &RiskMap, threshold: f64) -> RegionSet {
    let prob = |id| forecast.prob_affected.get(id).copied().unwrap_or(0.0);
    let score = |id| risk.scores.get(id).copied().unwrap_or(0.0);
    forecast
        .prob_affected
        .keys()
        .chain(risk.scores.keys())
        .filter(|id| prob(id).max(score(id)) >= threshold)
        .copied()
        .collect()
}
