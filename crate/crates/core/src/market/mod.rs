//! Resilience Management System market: dual decomposition over an island's
//! agents, power allocation and atomic settlement.

mod allocation;
mod dual;
mod engine;
mod oracle;
mod transaction;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, AgentId, OfferStatus, StorageAgentState};
use crate::scalar::Scalar;
use crate::topology::RegionId;

pub use allocation::{allocate_power, AllocationRequest};
pub use dual::{DualState, StepSchedule};
pub use engine::{
    run_market, settle, solve_equilibrium, IterationRecord, MarketAgents, MarketConfig, MarketEquilibrium,
    MarketOutcome,
};
pub use oracle::{lp_optimum, relative_gap, ORACLE_MAX_AGENTS};
pub use transaction::{commit_transaction, TransactionEvent, TransactionLog};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("market has no agents")]
    NoAgents,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("agent {0} has no coupling row")]
    MissingRow(AgentId),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("agent {agent} sits in region {region}, outside the island")]
    AgentOutsideIsland { agent: AgentId, region: RegionId },
    #[error("offer {offer} cannot be committed from status {status:?}")]
    InvalidTransition { offer: u64, status: OfferStatus },
    #[error("invalid market configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// What a coupling row stands for. Used for reporting only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// Net draw from the island's external supply ≤ import capacity.
    SupplyUpper,
    /// Net injection back into the supply ≤ export capacity.
    SupplyLower,
    Line,
    Reserve,
}

/// `Σ_b A_b x_b ≤ c`, one row per multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingConstraint<T> {
    pub kinds: Vec<ConstraintKind>,
    pub rows: BTreeMap<AgentId, Vec<T>>,
    pub rhs: Vec<T>,
}

impl<T: Scalar> CouplingConstraint<T> {
    pub fn new(
        kinds: Vec<ConstraintKind>,
        rows: BTreeMap<AgentId, Vec<T>>,
        rhs: Vec<T>,
    ) -> Result<Self, MarketError> {
        if kinds.len() != rhs.len() {
            return Err(MarketError::DimensionMismatch {
                expected: rhs.len(),
                got: kinds.len(),
            });
        }
        if let Some(bad) = rows.values().find(|r| r.len() != rhs.len()) {
            return Err(MarketError::DimensionMismatch {
                expected: rhs.len(),
                got: bad.len(),
            });
        }
        Ok(Self { kinds, rows, rhs })
    }

    /// Power balance of an island fed by `import_cap` kW of external supply
    /// that can absorb at most `export_cap` kW. Loads enter with `+1` on the
    /// import row, storage with `-1`; the export row is the negation.
    pub fn supply_balance(agents: &MarketAgents<T>, import_cap: T, export_cap: T) -> Self {
        let one = T::one();
        let rows = agents
            .demand
            .iter()
            .map(|d| (d.id, vec![one, -one]))
            .chain(agents.storage.iter().map(|s| (s.id, vec![-one, one])))
            .collect();
        Self {
            kinds: vec![ConstraintKind::SupplyUpper, ConstraintKind::SupplyLower],
            rows,
            rhs: vec![import_cap, export_cap],
        }
    }

    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }

    pub fn row(&self, agent: AgentId) -> Result<&[T], MarketError> {
        self.rows.get(&agent).map(Vec::as_slice).ok_or(MarketError::MissingRow(agent))
    }

    pub fn supply_index(&self) -> Option<usize> {
        self.kinds.iter().position(|k| *k == ConstraintKind::SupplyUpper)
    }

    /// `Σ_b A_b x_b − c`
    pub fn violation(&self, x: &BTreeMap<AgentId, T>) -> Result<Vec<T>, MarketError> {
        let mut g: Vec<T> = self.rhs.iter().map(|&c| -c).collect();
        for (id, &value) in x {
            for (gk, &a) in g.iter_mut().zip(self.row(*id)?) {
                *gk += a * value;
            }
        }
        Ok(g)
    }
}

/// Strictly-above-threshold export rule for a storage agent.
pub fn export_eligibility<T: Scalar>(dsa: &StorageAgentState<T>, threshold: T) -> bool {
    dsa.interested && dsa.soc > threshold
}
