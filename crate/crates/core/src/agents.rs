//! Demand response and distributed storage agents.
//!
//! Agent utilities are linear, so best responses to a price are bang-bang: an
//! agent sits at one end of its feasible interval or, for storage, at zero.
//! The market can also ask for a quadratically regularized response, which is
//! the same argmax with a small `-(eps/2)·x²` term added; it reduces to the
//! bang-bang rule at `eps = 0`.
//!
//! Prices follow the Lagrangian sign convention: an agent with coupling row
//! `a` facing duals `λ` pays `λᵀa` per kW of its decision.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::topology::RegionId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("storage {agent}: state of charge {soc} outside [{min}, {max}]")]
    SocBoundViolation { agent: AgentId, soc: f64, min: f64, max: f64 },
    #[error("storage {agent}: power {power} kW outside [-{charge_limit}, {discharge_limit}]")]
    PowerLimitViolation {
        agent: AgentId,
        power: f64,
        charge_limit: f64,
        discharge_limit: f64,
    },
    #[error("offer {offer} is addressed to another agent than {agent}")]
    WrongAddressee { offer: u64, agent: AgentId },
}

/// Demand response agent: a block of flexible load in one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandAgentState<T> {
    pub id: AgentId,
    pub region_id: RegionId,
    /// Power drawn this slot, kW.
    pub decision: T,
    pub load_min: T,
    pub load_max: T,
    /// Energy the agent needs over the whole episode (kWh); `None` is unlimited.
    pub energy_requirement: Option<T>,
    /// Marginal value of served load, $/kWh.
    pub utility_weight: T,
    pub interested: bool,
    /// Energy received through committed storage offers this slot, kWh.
    pub served_energy: T,
}

impl<T: Scalar> DemandAgentState<T> {
    pub fn new(id: u32, region: u32, load_min: T, load_max: T, utility_weight: T) -> Self {
        Self {
            id: AgentId(id),
            region_id: RegionId(region),
            decision: load_min,
            load_min,
            load_max,
            energy_requirement: None,
            utility_weight,
            interested: true,
            served_energy: T::zero(),
        }
    }
}

/// Distributed storage agent. Positive decisions discharge (export).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageAgentState<T> {
    pub id: AgentId,
    pub region_id: RegionId,
    pub decision: T,
    /// kWh
    pub soc: T,
    pub soc_min: T,
    pub soc_max: T,
    /// kW
    pub charge_limit: T,
    pub discharge_limit: T,
    pub eta_c: T,
    pub eta_d: T,
    /// $/kWh of throughput.
    pub degradation_cost: T,
    /// Conventional discharge/charge baseline for the slot (kW). Only used to
    /// seed the first market iterate.
    pub p_con: T,
    pub q_con: T,
    pub interested: bool,
    /// Lowest incentive ($/kWh) the owner accepts for exporting.
    pub min_incentive: T,
    /// Export is allowed only while `soc` is strictly above this level (kWh).
    pub export_threshold: T,
}

impl<T: Scalar> StorageAgentState<T> {
    pub fn new(id: u32, region: u32, soc: T, soc_min: T, soc_max: T, limit: T, degradation_cost: T) -> Self {
        Self {
            id: AgentId(id),
            region_id: RegionId(region),
            decision: T::zero(),
            soc,
            soc_min,
            soc_max,
            charge_limit: limit,
            discharge_limit: limit,
            eta_c: T::one(),
            eta_d: T::one(),
            degradation_cost,
            p_con: T::zero(),
            q_con: T::zero(),
            interested: true,
            min_incentive: T::zero(),
            export_threshold: soc_min,
        }
    }

    /// Energy deliverable at the terminals before hitting `soc_min`, kWh.
    pub fn exportable_energy(&self) -> T {
        ((self.soc - self.soc_min) * self.eta_d).max(T::zero())
    }

    /// Power interval reachable in one slot of `dt` hours, intersected with
    /// the converter limits. With `export_allowed = false` the upper end is 0.
    pub fn feasible_interval(&self, dt: T, export_allowed: bool) -> (T, T) {
        let zero = T::zero();
        let charge_room = ((self.soc_max - self.soc) / (self.eta_c * dt)).max(zero);
        let lo = -self.charge_limit.min(charge_room);
        let hi = if export_allowed {
            self.discharge_limit.min(self.exportable_energy() / dt)
        } else {
            zero
        };
        (lo, hi)
    }

    fn soc_tolerance(&self) -> T {
        T::epsilon() * T::lit(64.0) * self.soc_max.abs().max(T::one())
    }
}

/// Advances state of charge by one slot at power `power` (kW, positive
/// discharges). Leaving `[soc_min, soc_max]` is an error; nothing is clamped.
pub fn soc_step<T: Scalar>(
    state: &StorageAgentState<T>,
    power: T,
    dt: T,
) -> Result<StorageAgentState<T>, AgentError> {
    if power > state.discharge_limit || power < -state.charge_limit {
        return Err(AgentError::PowerLimitViolation {
            agent: state.id,
            power: power.to_f64_lossy(),
            charge_limit: state.charge_limit.to_f64_lossy(),
            discharge_limit: state.discharge_limit.to_f64_lossy(),
        });
    }
    let soc = if power > T::zero() {
        state.soc - power * dt / state.eta_d
    } else {
        state.soc - power * dt * state.eta_c
    };
    let tol = state.soc_tolerance();
    if soc < state.soc_min - tol || soc > state.soc_max + tol {
        return Err(AgentError::SocBoundViolation {
            agent: state.id,
            soc: soc.to_f64_lossy(),
            min: state.soc_min.to_f64_lossy(),
            max: state.soc_max.to_f64_lossy(),
        });
    }
    Ok(StorageAgentState {
        soc,
        decision: power,
        ..state.clone()
    })
}

/// `λᵀa`, the per-kW price an agent with coupling row `a` faces.
pub fn effective_price<T: Scalar>(duals: &[T], row: &[T]) -> T {
    duals.iter().zip(row).map(|(&l, &a)| l * a).sum()
}

/// Bang-bang demand response. Ties go to `load_min`.
pub fn demand_best_response<T: Scalar>(state: &DemandAgentState<T>, duals: &[T], row: &[T]) -> T {
    demand_response_at_price(state, effective_price(duals, row), T::zero())
}

/// Demand response to a scalar price, optionally regularized by `eps`.
pub fn demand_response_at_price<T: Scalar>(state: &DemandAgentState<T>, price: T, eps: T) -> T {
    let margin = state.utility_weight - price;
    if eps > T::zero() {
        (margin / eps).max(state.load_min).min(state.load_max)
    } else if margin > T::zero() {
        state.load_max
    } else {
        state.load_min
    }
}

/// Storage best response over the slot-feasible interval, maximizing
/// `-(λᵀa)·x - d·|x|·dt`. Ties go toward zero.
pub fn storage_best_response<T: Scalar>(state: &StorageAgentState<T>, duals: &[T], row: &[T], dt: T) -> T {
    let (lo, hi) = state.feasible_interval(dt, true);
    storage_response_at_price(state, -effective_price(duals, row), dt, (lo, hi), T::zero())
}

/// Storage response to an export revenue `revenue` ($/kW) over `bounds`.
pub fn storage_response_at_price<T: Scalar>(
    state: &StorageAgentState<T>,
    revenue: T,
    dt: T,
    bounds: (T, T),
    eps: T,
) -> T {
    let (lo, hi) = bounds;
    let wear = state.degradation_cost * dt;
    let zero = T::zero();
    if eps > zero {
        return if revenue > wear {
            ((revenue - wear) / eps).min(hi).max(zero)
        } else if revenue < -wear {
            ((revenue + wear) / eps).max(lo).min(zero)
        } else {
            zero
        };
    }
    let discharge = (revenue - wear) * hi;
    let charge = (revenue + wear) * lo;
    let best = discharge.max(charge);
    if best <= zero {
        zero
    } else if discharge > charge {
        hi
    } else if charge > discharge {
        lo
    } else if hi <= -lo {
        hi
    } else {
        lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OfferStatus {
    Proposed,
    AcceptedByDsa,
    AcceptedByDra,
    Committed,
    Aborted,
}

/// Energy the RMS proposes to move from a storage agent to a demand agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offer<T> {
    pub id: u64,
    pub from_dsa: AgentId,
    pub to_dra: AgentId,
    /// kWh delivered to the demand agent.
    pub quantity: T,
    /// $/kWh
    pub incentive: T,
    pub status: OfferStatus,
}

impl<T: Scalar> Offer<T> {
    pub fn propose(id: u64, from_dsa: AgentId, to_dra: AgentId, quantity: T, incentive: T) -> Self {
        Self {
            id,
            from_dsa,
            to_dra,
            quantity,
            incentive,
            status: OfferStatus::Proposed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfferDecision {
    Accept,
    Reject,
}

pub trait EvaluateOffer<T> {
    fn evaluate_offer(&self, offer: &Offer<T>) -> Result<OfferDecision, AgentError>;
}

fn decide(ok: bool) -> OfferDecision {
    if ok {
        OfferDecision::Accept
    } else {
        OfferDecision::Reject
    }
}

impl<T: Scalar> EvaluateOffer<T> for StorageAgentState<T> {
    fn evaluate_offer(&self, offer: &Offer<T>) -> Result<OfferDecision, AgentError> {
        if offer.from_dsa != self.id {
            return Err(AgentError::WrongAddressee { offer: offer.id, agent: self.id });
        }
        Ok(decide(
            self.interested && offer.incentive >= self.min_incentive && offer.quantity <= self.exportable_energy(),
        ))
    }
}

impl<T: Scalar> EvaluateOffer<T> for DemandAgentState<T> {
    fn evaluate_offer(&self, offer: &Offer<T>) -> Result<OfferDecision, AgentError> {
        if offer.to_dra != self.id {
            return Err(AgentError::WrongAddressee { offer: offer.id, agent: self.id });
        }
        Ok(decide(self.interested && offer.incentive <= self.utility_weight))
    }
}
