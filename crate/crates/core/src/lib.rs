//! Grid resilience simulator.
//!
//! A hazard (wildfire or hurricane) spreads over a regional network. Regions
//! at risk are islanded ahead of time, and inside every island a Resilience
//! Management System runs a price-based market between demand response agents
//! and distributed storage agents. The resulting served-load timeline is
//! summarized as a resilience curve, an eight-point approximation of it, and
//! a monetary loss.
//!
//! The numerical core ([`agents`], [`market`], [`lp`], [`metrics`]) is generic
//! over [`Scalar`] (`f32` or `f64`); the aliases below fix it to `f64`, which
//! is what the scenario runner uses.

pub mod agents;
pub mod hazard;
pub mod lp;
pub mod market;
pub mod metrics;
pub mod rng;
mod scalar;
pub mod scenario;
pub mod topology;

pub use scalar::Scalar;

pub type DemandAgent = agents::DemandAgentState<f64>;
pub type StorageAgent = agents::StorageAgentState<f64>;
pub type Offer = agents::Offer<f64>;
pub type Coupling = market::CouplingConstraint<f64>;
pub type Equilibrium = market::MarketEquilibrium<f64>;
pub type MarketAgents = market::MarketAgents<f64>;
pub type MarketConfig = market::MarketConfig<f64>;
pub type TransactionLog = market::TransactionLog<f64>;
pub type EightPointCurve = metrics::EightPointCurve<f64>;
pub type PerformanceSample = metrics::PerformanceSample<f64>;
pub type ResilienceReport = metrics::ResilienceReport<f64>;
