//! Centralized optimum of an island market, for checking the decentralized
//! solve. Storage wear `d·|x|` is handled by enumerating the sign of every
//! storage decision; each orthant is then a plain LP solved by vertex
//! enumeration.

use super::{export_eligibility, CouplingConstraint, MarketAgents, MarketError};
use crate::lp::{LinearProgram, LpSolution};
use crate::scalar::Scalar;

/// Largest market the oracle will attempt.
pub const ORACLE_MAX_AGENTS: usize = 6;

/// Maximum of `Σ w_i x_i − Σ d_j |x_j| dt` over the agents' feasible sets and
/// the coupling rows. Variables are ordered demand first, then storage.
/// `Ok(None)` means the market is infeasible.
pub fn lp_optimum<T: Scalar>(
    agents: &MarketAgents<T>,
    constraint: &CouplingConstraint<T>,
    dt: T,
) -> Result<Option<LpSolution<T>>, MarketError> {
    let nd = agents.demand.len();
    let ns = agents.storage.len();
    let n = nd + ns;
    if n == 0 {
        return Err(MarketError::NoAgents);
    }
    let mut rows = Vec::with_capacity(n);
    for d in &agents.demand {
        rows.push(constraint.row(d.id)?);
    }
    for s in &agents.storage {
        rows.push(constraint.row(s.id)?);
    }

    let mut best: Option<LpSolution<T>> = None;
    for signs in 0u32..(1 << ns) {
        let mut objective = Vec::with_capacity(n);
        objective.extend(agents.demand.iter().map(|d| d.utility_weight));
        for (j, s) in agents.storage.iter().enumerate() {
            let wear = s.degradation_cost * dt;
            objective.push(if signs & (1 << j) != 0 { -wear } else { wear });
        }
        let mut lp = LinearProgram::new(objective);
        for (i, d) in agents.demand.iter().enumerate() {
            lp.bound(i, d.load_min, d.load_max);
        }
        for (j, s) in agents.storage.iter().enumerate() {
            let (lo, hi) = s.feasible_interval(dt, export_eligibility(s, s.export_threshold));
            if signs & (1 << j) != 0 {
                lp.bound(nd + j, T::zero(), hi);
            } else {
                lp.bound(nd + j, lo, T::zero());
            }
        }
        for k in 0..constraint.len() {
            lp.constrain(rows.iter().map(|r| r[k]).collect(), constraint.rhs[k]);
        }
        if let Some(sol) = lp.solve_by_vertex_enumeration() {
            if best.as_ref().is_none_or(|b| sol.value > b.value) {
                best = Some(sol);
            }
        }
    }
    Ok(best)
}

/// `|optimum − value| / max(|optimum|, 1)`
pub fn relative_gap<T: Scalar>(optimum: T, value: T) -> T {
    (optimum - value).abs() / optimum.abs().max(T::one())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::agents::{DemandAgentState, StorageAgentState};

    #[test]
    fn slack_single_demand() {
        let agents = MarketAgents {
            demand: vec![DemandAgentState::new(1, 1, 0.0, 5.0, 1.0)],
            ..Default::default()
        };
        let c = CouplingConstraint::supply_balance(&agents, 5.0, 0.0);
        let sol = lp_optimum(&agents, &c, 1.0).unwrap().unwrap();
        assert_eq!(sol.x, vec![5.0]);
        assert_eq!(sol.value, 5.0);
    }

    #[test]
    fn storage_limited_island() {
        let agents = MarketAgents::<f64> {
            demand: vec![DemandAgentState::new(1, 1, 0.0, 5.0, 1.0)],
            storage: vec![StorageAgentState::new(2, 1, 50.0, 0.0, 100.0, 3.0, 0.1)],
            priorities: BTreeMap::new(),
        };
        let c = CouplingConstraint::supply_balance(&agents, 0.0, 0.0);
        let sol = lp_optimum(&agents, &c, 1.0).unwrap().unwrap();
        assert!((sol.x[0] - 3.0).abs() < 1e-12 && (sol.x[1] - 3.0).abs() < 1e-12);
        assert!((sol.value - 2.7).abs() < 1e-12);
    }

    #[test]
    fn infeasible_market() {
        let agents = MarketAgents {
            demand: vec![DemandAgentState::new(1, 1, 2.0, 5.0, 1.0)],
            ..Default::default()
        };
        let c = CouplingConstraint::supply_balance(&agents, 1.0, 0.0);
        assert!(lp_optimum(&agents, &c, 1.0).unwrap().is_none());
    }

    #[test]
    fn gap_floor() {
        assert_eq!(relative_gap(0.0, 0.5), 0.5);
        assert_eq!(relative_gap(10.0, 9.0), 0.1);
    }
}
