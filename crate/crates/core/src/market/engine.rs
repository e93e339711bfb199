//! The iterative market loop.
//!
//! Each iteration the RMS broadcasts multipliers, every agent answers with its
//! best response, and the multipliers take a projected subgradient step on the
//! aggregate constraint violation. The loop stops once both the decisions and
//! the multipliers are stationary to within `xi`, or after `max_iter` rounds.
//! Settlement then turns the equilibrium into grants and storage transactions.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::allocation::{allocate_power, AllocationRequest};
use super::dual::{DualState, StepSchedule};
use super::transaction::{commit_transaction, TransactionLog};
use super::{export_eligibility, ConstraintKind, CouplingConstraint, MarketError};
use crate::agents::{
    demand_response_at_price, effective_price, storage_response_at_price, AgentId, DemandAgentState, Offer,
    OfferStatus, StorageAgentState,
};
use crate::scalar::{max_abs, Scalar};
use crate::topology::{RegionId, RegionSet};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MarketAgents<T> {
    pub demand: Vec<DemandAgentState<T>>,
    pub storage: Vec<StorageAgentState<T>>,
    /// Region allocation weights; missing regions weigh 1.
    pub priorities: BTreeMap<RegionId, T>,
}

impl<T: Scalar> MarketAgents<T> {
    pub fn len(&self) -> usize {
        self.demand.len() + self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn priority(&self, region: RegionId) -> T {
        self.priorities.get(&region).copied().unwrap_or_else(T::one)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig<T> {
    /// Stationarity threshold on decisions (kW) and on the projected dual step.
    pub xi: T,
    pub max_iter: u32,
    /// `None` picks a constant step of `eps / Σ‖A_b‖²`, which is safe for the
    /// regularized responses; with `eps = 0` it falls back to a diminishing
    /// schedule with the same `c₀` computed as if `eps` were 1.
    pub schedule: Option<StepSchedule<T>>,
    /// Weight `eps` of the `-(eps/2)·x²` term added to agent utilities.
    /// Zero gives the pure bang-bang responses.
    pub regularization: T,
    /// Once the loop settles, `eps` is cut tenfold and the loop resumes from
    /// the current prices, until `eps` reaches this floor. Set it equal to
    /// `regularization` for a single pass.
    pub regularization_floor: T,
    /// Slot length in hours.
    pub dt: T,
    /// Double the step while the decisions stay frozen and the violation keeps
    /// its sign, so the prices cross regions where every agent sits on a bound
    /// in a few iterations instead of thousands. Each time an expanded step
    /// flips the sign of the violation, the allowed expansion shrinks; a long
    /// frozen stretch at the limit lets it grow again.
    pub expand_flat_steps: bool,
}

impl<T: Scalar> Default for MarketConfig<T> {
    fn default() -> Self {
        Self {
            xi: T::lit(1e-3),
            max_iter: 10_000,
            schedule: None,
            regularization: T::lit(1e-2),
            regularization_floor: T::lit(1e-4),
            dt: T::one(),
            expand_flat_steps: true,
        }
    }
}

impl<T: Scalar> MarketConfig<T> {
    fn validate(&self) -> Result<(), MarketError> {
        if !(self.xi > T::zero()) {
            return Err(MarketError::InvalidConfig("xi must be positive"));
        }
        if self.max_iter == 0 {
            return Err(MarketError::InvalidConfig("max_iter must be at least 1"));
        }
        if !(self.dt > T::zero()) {
            return Err(MarketError::InvalidConfig("dt must be positive"));
        }
        if !(self.regularization >= T::zero()) {
            return Err(MarketError::InvalidConfig("regularization must be non-negative"));
        }
        if !(self.regularization_floor >= T::zero()) {
            return Err(MarketError::InvalidConfig("regularization floor must be non-negative"));
        }
        if let Some(s) = self.schedule {
            if !(s.c0() > T::zero()) {
                return Err(MarketError::InvalidConfig("step size must be positive"));
            }
        }
        Ok(())
    }

    pub fn resolve_schedule(&self, constraint: &CouplingConstraint<T>) -> StepSchedule<T> {
        self.schedule_for(constraint, self.regularization)
    }

    fn schedule_for(&self, constraint: &CouplingConstraint<T>, eps: T) -> StepSchedule<T> {
        if let Some(s) = self.schedule {
            return s;
        }
        let norm2: T = constraint.rows.values().flatten().map(|&a| a * a).sum();
        let norm2 = norm2.max(T::one());
        if eps > T::zero() {
            StepSchedule::Constant(eps / norm2)
        } else {
            StepSchedule::Diminishing(T::one() / norm2)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord<T> {
    pub m: u32,
    /// Max-norm of `x^m − x^{m−1}`.
    pub residual: T,
    pub max_violation: T,
    pub lambda: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketEquilibrium<T> {
    pub x: BTreeMap<AgentId, T>,
    pub lambda_final: Vec<T>,
    pub kinds: Vec<ConstraintKind>,
    pub iterations: u32,
    pub residual: T,
    pub converged: bool,
    /// Largest positive component of `Σ A_b x_b − c`.
    pub violation: T,
    /// Served-load value minus storage wear at `x`.
    pub objective: T,
    /// Smallest Lagrangian dual value seen (an upper bound on the optimum of
    /// the unregularized problem).
    pub best_dual_value: T,
    pub diagnostics: Vec<IterationRecord<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome<T> {
    pub equilibrium: MarketEquilibrium<T>,
    pub log: TransactionLog<T>,
    pub demand: Vec<DemandAgentState<T>>,
    pub storage: Vec<StorageAgentState<T>>,
    /// kW granted from the island's external supply.
    pub grants: BTreeMap<AgentId, T>,
    /// kW actually delivered to each demand agent (grant plus storage).
    pub served: BTreeMap<AgentId, T>,
}

/// Decision bounds and utilities for the stacked agent vector.
struct Stack<'a, T> {
    ids: Vec<AgentId>,
    rows: Vec<&'a [T]>,
    bounds: Vec<(T, T)>,
    demand: &'a [DemandAgentState<T>],
    storage: &'a [StorageAgentState<T>],
    dt: T,
}

impl<'a, T: Scalar> Stack<'a, T> {
    fn new(agents: &'a MarketAgents<T>, constraint: &'a CouplingConstraint<T>, dt: T) -> Result<Self, MarketError> {
        let mut ids = Vec::with_capacity(agents.len());
        let mut rows = Vec::with_capacity(agents.len());
        let mut bounds = Vec::with_capacity(agents.len());
        for d in &agents.demand {
            ids.push(d.id);
            rows.push(constraint.row(d.id)?);
            bounds.push((d.load_min, d.load_max));
        }
        for s in &agents.storage {
            ids.push(s.id);
            rows.push(constraint.row(s.id)?);
            bounds.push(s.feasible_interval(dt, export_eligibility(s, s.export_threshold)));
        }
        Ok(Self {
            ids,
            rows,
            bounds,
            demand: &agents.demand,
            storage: &agents.storage,
            dt,
        })
    }

    fn responses(&self, lambda: &[T], eps: T) -> Vec<T> {
        let nd = self.demand.len();
        let mut x = Vec::with_capacity(self.ids.len());
        for (k, d) in self.demand.iter().enumerate() {
            x.push(demand_response_at_price(d, effective_price(lambda, self.rows[k]), eps));
        }
        for (k, s) in self.storage.iter().enumerate() {
            let idx = nd + k;
            let revenue = -effective_price(lambda, self.rows[idx]);
            x.push(storage_response_at_price(s, revenue, self.dt, self.bounds[idx], eps));
        }
        x
    }

    fn objective(&self, x: &[T]) -> T {
        let nd = self.demand.len();
        let served: T = self.demand.iter().zip(x).map(|(d, &v)| d.utility_weight * v).sum();
        let wear: T = self.storage.iter().zip(&x[nd..]).map(|(s, &v)| s.degradation_cost * v.abs() * self.dt).sum();
        served - wear
    }

    fn violation(&self, x: &[T], rhs: &[T]) -> Vec<T> {
        let mut g: Vec<T> = rhs.iter().map(|&c| -c).collect();
        for (row, &v) in self.rows.iter().zip(x) {
            for (gk, &a) in g.iter_mut().zip(row.iter()) {
                *gk += a * v;
            }
        }
        g
    }

    /// Lagrangian dual function of the unregularized problem at `lambda`.
    fn dual_value(&self, lambda: &[T], rhs: &[T]) -> T {
        let x = self.responses(lambda, T::zero());
        let g = self.violation(&x, rhs);
        self.objective(&x) - lambda.iter().zip(&g).map(|(&l, &gk)| l * gk).sum::<T>()
    }

    /// Responses under `eps` at `lambda`, if the projected dual step they
    /// induce is within `xi`.
    fn stationary_at(&self, lambda: &[T], rhs: &[T], eps: T, zeta: T, xi: T) -> Option<Vec<T>> {
        let x = self.responses(lambda, eps);
        let g = self.violation(&x, rhs);
        let step = lambda
            .iter()
            .zip(&g)
            .fold(T::zero(), |acc, (&l, &gk)| acc.max(((l + zeta * gk).max(T::zero()) - l).abs()))
            / zeta;
        (step <= xi).then_some(x)
    }

    fn random_start<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let nd = self.demand.len();
        let mut x = Vec::with_capacity(self.ids.len());
        for (lo, hi) in &self.bounds[..nd] {
            x.push(*lo + (*hi - *lo) * T::lit(rng.random::<f64>()));
        }
        for (s, (lo, hi)) in self.storage.iter().zip(&self.bounds[nd..]) {
            let p_con = s.discharge_limit * T::lit(rng.random::<f64>());
            let q_con = s.charge_limit * T::lit(rng.random::<f64>());
            x.push((p_con - q_con).max(*lo).min(*hi));
        }
        x
    }
}

fn positive_max<T: Scalar>(g: &[T]) -> T {
    g.iter().fold(T::zero(), |acc, &v| acc.max(v))
}

/// Runs the price iteration to a (possibly non-converged) equilibrium.
pub fn solve_equilibrium<T: Scalar, R: Rng + ?Sized>(
    island: &RegionSet,
    agents: &MarketAgents<T>,
    constraint: &CouplingConstraint<T>,
    config: &MarketConfig<T>,
    warm_start: Option<&MarketEquilibrium<T>>,
    rng: &mut R,
) -> Result<MarketEquilibrium<T>, MarketError> {
    config.validate()?;
    if agents.is_empty() {
        return Err(MarketError::NoAgents);
    }
    let regions = agents
        .demand
        .iter()
        .map(|d| (d.id, d.region_id))
        .chain(agents.storage.iter().map(|s| (s.id, s.region_id)));
    for (agent, region) in regions {
        if !island.contains(&region) {
            return Err(MarketError::AgentOutsideIsland { agent, region });
        }
    }

    let stack = Stack::new(agents, constraint, config.dt)?;
    let schedule = config.resolve_schedule(constraint);
    let mut eps = config.regularization;
    let floor = config.regularization_floor.min(eps);
    let ten = T::lit(10.0);

    let mut x_prev = stack.random_start(rng);
    let mut dual = DualState::zeros(constraint.len(), schedule);
    if let Some(warm) = warm_start {
        for (slot, id) in x_prev.iter_mut().zip(&stack.ids) {
            if let Some(&v) = warm.x.get(id) {
                *slot = v;
            }
        }
        if warm.lambda_final.len() == constraint.len() {
            dual = DualState::new(warm.lambda_final.clone(), schedule);
        }
    }
    let floor_schedule = config.schedule_for(constraint, floor);
    let floor_zeta = floor_schedule.step_size(1);
    if warm_start.is_some()
        && eps > floor
        && stack
            .stationary_at(&dual.lambda, &constraint.rhs, floor, floor_zeta, config.xi)
            .is_some()
    {
        eps = floor;
        dual = DualState::new(dual.lambda, floor_schedule);
    }

    let scale = max_abs(&constraint.rhs).max(T::one());
    let feasible_tol = T::lit(1e-2) * scale;
    let mut diagnostics = Vec::new();
    let mut best_dual = T::infinity();
    // (violation, objective, x, λ, residual)
    let mut best: Option<(T, T, Vec<T>, Vec<T>, T)> = None;
    let two = T::lit(2.0);
    let mut boost = T::one();
    let mut boost_cap = T::lit(f64::from(1u32 << 30));
    let mut g_prev: Option<Vec<T>> = None;
    let mut flat_at_cap = 0u32;

    for _ in 0..config.max_iter {
        let x = stack.responses(&dual.lambda, eps);
        let g = stack.violation(&x, &constraint.rhs);
        let residual = x
            .iter()
            .zip(&x_prev)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));
        let violation = positive_max(&g);
        let objective = stack.objective(&x);
        best_dual = best_dual.min(stack.dual_value(&dual.lambda, &constraint.rhs));
        diagnostics.push(IterationRecord {
            m: dual.m,
            residual,
            max_violation: violation,
            lambda: dual.lambda.clone(),
        });

        if config.expand_flat_steps {
            let same_side = g_prev
                .as_ref()
                .is_some_and(|gp| gp.iter().zip(&g).all(|(&a, &b)| (a > T::zero()) == (b > T::zero())));
            if residual == T::zero() && same_side {
                if boost >= boost_cap {
                    flat_at_cap += 1;
                    if flat_at_cap >= 16 {
                        boost_cap = boost_cap * two;
                        flat_at_cap = 0;
                    }
                }
                boost = (boost * two).min(boost_cap);
            } else if boost > T::one() {
                flat_at_cap = 0;
                if !same_side {
                    boost_cap = (boost / (two * two)).max(T::one());
                }
                boost = T::one();
            }
        }
        let zeta = dual.zeta * boost;
        let next = DualState {
            zeta,
            ..dual.clone()
        }
        .dual_update(&g)?;
        let dual_step = next
            .lambda
            .iter()
            .zip(&dual.lambda)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
            / zeta;

        if residual <= config.xi && dual_step <= config.xi && eps > floor {
            match stack.stationary_at(&dual.lambda, &constraint.rhs, floor, floor_zeta, config.xi) {
                Some(xf) if xf.iter().zip(&x).all(|(&a, &b)| (a - b).abs() <= config.xi) => {
                    let g = stack.violation(&xf, &constraint.rhs);
                    return Ok(MarketEquilibrium {
                        objective: stack.objective(&xf),
                        violation: positive_max(&g),
                        x: stack.ids.iter().copied().zip(xf).collect(),
                        lambda_final: dual.lambda,
                        kinds: constraint.kinds.clone(),
                        iterations: diagnostics.len() as u32,
                        residual,
                        converged: true,
                        best_dual_value: best_dual,
                        diagnostics,
                    });
                }
                Some(_) => eps = floor,
                None => eps = (eps / ten).max(floor),
            }
            dual = DualState::new(dual.lambda, config.schedule_for(constraint, eps));
            boost = T::one();
            boost_cap = T::lit(f64::from(1u32 << 30));
            g_prev = None;
            flat_at_cap = 0;
            x_prev = x;
            continue;
        }
        if residual <= config.xi && dual_step <= config.xi {
            return Ok(MarketEquilibrium {
                x: stack.ids.iter().copied().zip(x).collect(),
                lambda_final: dual.lambda,
                kinds: constraint.kinds.clone(),
                iterations: diagnostics.len() as u32,
                residual,
                converged: true,
                violation,
                objective,
                best_dual_value: best_dual,
                diagnostics,
            });
        }

        let better = match &best {
            None => true,
            Some((bv, bo, ..)) => {
                let (v_ok, bv_ok) = (violation <= feasible_tol, *bv <= feasible_tol);
                match (v_ok, bv_ok) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => objective >= *bo,
                    (false, false) => violation <= *bv,
                }
            }
        };
        if better {
            best = Some((violation, objective, x.clone(), dual.lambda.clone(), residual));
        }
        x_prev = x;
        g_prev = Some(g);
        dual = next;
    }

    let (violation, objective, x, lambda, residual) = best.expect("max_iter ≥ 1");
    Ok(MarketEquilibrium {
        x: stack.ids.iter().copied().zip(x).collect(),
        lambda_final: lambda,
        kinds: constraint.kinds.clone(),
        iterations: diagnostics.len() as u32,
        residual,
        converged: false,
        violation,
        objective,
        best_dual_value: best_dual,
        diagnostics,
    })
}

/// Turns an equilibrium into supply grants and storage transactions.
///
/// External supply (the `SupplyUpper` row) is allocated first with
/// [`allocate_power`], each demand agent asking for `load_max` but needing
/// only its equilibrium load. Whatever remains of that load is requested from
/// discharging storage, one two-phase offer at a time, priced at the buyer's
/// effective price. Only discharge is dispatched.
pub fn settle<T: Scalar>(
    equilibrium: &MarketEquilibrium<T>,
    agents: &MarketAgents<T>,
    constraint: &CouplingConstraint<T>,
    dt: T,
    slot: u32,
) -> Result<MarketOutcome<T>, MarketError> {
    let zero = T::zero();
    let tiny = T::lit(1e-9);
    let supply = constraint.supply_index();
    let x = |id: &AgentId| equilibrium.x.get(id).copied().ok_or(MarketError::UnknownAgent(*id));

    let mut requests = BTreeMap::new();
    for d in &agents.demand {
        let need = x(&d.id)?.max(zero);
        requests.insert(
            d.id,
            AllocationRequest::new(d.load_max.max(need))
                .with_need(need)
                .with_priority(agents.priority(d.region_id)),
        );
    }
    let grants = match supply {
        Some(k) => allocate_power(&requests, constraint.rhs[k]),
        None => requests.iter().map(|(&id, r)| (id, r.need)).collect(),
    };

    let mut demand: Vec<DemandAgentState<T>> = agents.demand.clone();
    let mut storage: Vec<StorageAgentState<T>> = agents.storage.clone();
    for d in &mut demand {
        d.served_energy = zero;
        d.decision = x(&d.id)?;
    }
    let mut budget = Vec::with_capacity(storage.len());
    for s in &mut storage {
        let xs = x(&s.id)?;
        let eligible = xs > zero && export_eligibility(s, s.export_threshold);
        budget.push(if eligible { xs * dt } else { zero });
    }

    let mut log = TransactionLog::new(slot);
    let mut next_id = 0u64;
    for d in &mut demand {
        let mut missing = (requests[&d.id].need - grants[&d.id]).max(zero) * dt;
        for (s, remaining) in storage.iter_mut().zip(budget.iter_mut()) {
            if missing <= tiny {
                break;
            }
            let quantity = missing.min(*remaining).min(s.exportable_energy());
            if quantity <= tiny {
                continue;
            }
            let incentive = effective_price(&equilibrium.lambda_final, constraint.row(d.id)?).max(zero);
            let offer = Offer::propose(next_id, s.id, d.id, quantity, incentive);
            next_id += 1;
            let done = commit_transaction(&offer, s, d, &mut log)?;
            if done.status == OfferStatus::Committed {
                missing -= quantity;
                *remaining -= quantity;
            } else if dsa_accepted(&log, done.id) {
                // the demand side turned the price down; no other seller offers less
                break;
            }
        }
    }

    let mut delivered: BTreeMap<AgentId, T> = BTreeMap::new();
    for o in log.committed() {
        *delivered.entry(o.from_dsa).or_insert(zero) += o.quantity;
    }
    for s in &mut storage {
        s.decision = delivered.get(&s.id).copied().unwrap_or(zero) / dt;
    }
    let served = demand.iter().map(|d| (d.id, grants[&d.id] + d.served_energy / dt)).collect();

    Ok(MarketOutcome {
        equilibrium: equilibrium.clone(),
        log,
        demand,
        storage,
        grants,
        served,
    })
}

fn dsa_accepted<T: Scalar>(log: &TransactionLog<T>, offer: u64) -> bool {
    log.events
        .iter()
        .any(|e| e.offer.id == offer && e.offer.status == OfferStatus::AcceptedByDsa)
}

/// Solves the island market and settles it.
pub fn run_market<T: Scalar, R: Rng + ?Sized>(
    island: &RegionSet,
    agents: &MarketAgents<T>,
    constraint: &CouplingConstraint<T>,
    config: &MarketConfig<T>,
    warm_start: Option<&MarketEquilibrium<T>>,
    slot: u32,
    rng: &mut R,
) -> Result<MarketOutcome<T>, MarketError> {
    let equilibrium = solve_equilibrium(island, agents, constraint, config, warm_start, rng)?;
    settle(&equilibrium, agents, constraint, config.dt, slot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn island() -> RegionSet {
        RegionSet::from([RegionId(1)])
    }

    fn two_agent() -> (MarketAgents<f64>, CouplingConstraint<f64>) {
        let agents = MarketAgents {
            demand: vec![DemandAgentState::new(1, 1, 0.0, 5.0, 1.0)],
            storage: vec![StorageAgentState::new(2, 1, 50.0, 0.0, 100.0, 3.0, 0.1)],
            priorities: BTreeMap::new(),
        };
        let constraint = CouplingConstraint::supply_balance(&agents, 0.0, 0.0);
        (agents, constraint)
    }

    #[test]
    fn slack_single_demand() {
        let agents = MarketAgents {
            demand: vec![DemandAgentState::new(1, 1, 0.0, 5.0, 1.0)],
            ..Default::default()
        };
        let rows = BTreeMap::from([(AgentId(1), vec![1.0])]);
        let constraint = CouplingConstraint::new(vec![ConstraintKind::SupplyUpper], rows, vec![5.0]).unwrap();
        let eq = solve_equilibrium(
            &island(),
            &agents,
            &constraint,
            &MarketConfig::default(),
            None,
            &mut rng::substream(1, rng::INIT, 0),
        )
        .unwrap();
        assert!(eq.converged);
        assert!(eq.iterations <= 2);
        assert_eq!(eq.x[&AgentId(1)], 5.0);
        assert_eq!(eq.lambda_final, vec![0.0]);
    }

    #[test]
    fn storage_serves_islanded_load() {
        let (agents, constraint) = two_agent();
        let out = run_market(
            &island(),
            &agents,
            &constraint,
            &MarketConfig::default(),
            None,
            0,
            &mut rng::substream(1, rng::INIT, 0),
        )
        .unwrap();
        let eq = &out.equilibrium;
        assert!(eq.converged, "{eq:?}");
        assert!((eq.x[&AgentId(1)] - 3.0).abs() < 1e-2);
        assert!((eq.x[&AgentId(2)] - 3.0).abs() < 1e-2);
        let price = eq.lambda_final[0] - eq.lambda_final[1];
        assert!((0.1..=1.0).contains(&price), "price {price}");
        assert!((out.served[&AgentId(1)] - eq.x[&AgentId(1)]).abs() < 1e-2, "{:?} {:?} {:?}", eq.x, eq.lambda_final, out.served);
        assert!(out.log.verify().is_ok());
        assert!((out.storage[0].soc - (50.0 - out.served[&AgentId(1)])).abs() < 1e-9);
    }

    #[test]
    fn empty_market_is_an_error() {
        let agents = MarketAgents::<f64>::default();
        let constraint = CouplingConstraint::supply_balance(&agents, 1.0, 1.0);
        let err = solve_equilibrium(
            &island(),
            &agents,
            &constraint,
            &MarketConfig::default(),
            None,
            &mut rng::substream(1, rng::INIT, 0),
        );
        assert_eq!(err.unwrap_err(), MarketError::NoAgents);
    }

    #[test]
    fn agent_outside_island_rejected() {
        let (agents, constraint) = two_agent();
        let err = solve_equilibrium(
            &RegionSet::from([RegionId(9)]),
            &agents,
            &constraint,
            &MarketConfig::default(),
            None,
            &mut rng::substream(1, rng::INIT, 0),
        );
        assert!(matches!(err, Err(MarketError::AgentOutsideIsland { .. })));
    }

    #[test]
    fn warm_start_converges_immediately() {
        let (agents, constraint) = two_agent();
        let config = MarketConfig::default();
        let mut r = rng::substream(1, rng::INIT, 0);
        let first = solve_equilibrium(&island(), &agents, &constraint, &config, None, &mut r).unwrap();
        let second = solve_equilibrium(&island(), &agents, &constraint, &config, Some(&first), &mut r).unwrap();
        assert!(second.converged);
        assert!(second.iterations <= 2, "{}", second.iterations);
    }

    #[test]
    fn non_convergence_is_reported() {
        let (agents, constraint) = two_agent();
        let config = MarketConfig {
            max_iter: 3,
            ..MarketConfig::default()
        };
        let eq = solve_equilibrium(&island(), &agents, &constraint, &config, None, &mut rng::substream(1, rng::INIT, 0))
            .unwrap();
        assert!(!eq.converged);
        assert_eq!(eq.iterations, 3);
    }

    #[test]
    fn invalid_config_rejected() {
        let (agents, constraint) = two_agent();
        let config = MarketConfig {
            xi: 0.0,
            ..MarketConfig::default()
        };
        let err = solve_equilibrium(&island(), &agents, &constraint, &config, None, &mut rng::substream(1, rng::INIT, 0));
        assert!(matches!(err, Err(MarketError::InvalidConfig(_))));
    }

    #[test]
    fn works_in_f32() {
        let agents = MarketAgents::<f32> {
            demand: vec![DemandAgentState::new(1, 1, 0.0, 5.0, 1.0)],
            storage: vec![StorageAgentState::new(2, 1, 50.0, 0.0, 100.0, 3.0, 0.1)],
            priorities: BTreeMap::new(),
        };
        let constraint = CouplingConstraint::supply_balance(&agents, 0.0, 0.0);
        let eq = solve_equilibrium(
            &island(),
            &agents,
            &constraint,
            &MarketConfig::default(),
            None,
            &mut rng::substream(1, rng::INIT, 0),
        )
        .unwrap();
        assert!((eq.x[&AgentId(1)] - 3.0).abs() < 1e-2);
    }
}
