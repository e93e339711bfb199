//! Two-phase incentive transactions between storage and demand agents.
//!
//! An offer is first put to the storage agent, then to the demand agent.
//! Only when both accept are the battery and the served load touched, and
//! then both change together.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MarketError;
use crate::agents::{AgentId, DemandAgentState, EvaluateOffer, Offer, OfferDecision, OfferStatus, StorageAgentState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionEvent<T> {
    /// Logical clock, strictly increasing within a log.
    pub seq: u64,
    pub slot: u32,
    pub offer: Offer<T>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransactionLog<T> {
    pub slot: u32,
    pub events: Vec<TransactionEvent<T>>,
}

impl<T: Scalar> TransactionLog<T> {
    pub fn new(slot: u32) -> Self {
        Self { slot, events: Vec::new() }
    }

    fn record(&mut self, offer: &Offer<T>) {
        let seq = self.events.last().map_or(0, |e| e.seq + 1);
        self.events.push(TransactionEvent {
            seq,
            slot: self.slot,
            offer: offer.clone(),
        });
    }

    /// Final state of every offer, in order of first appearance.
    pub fn final_offers(&self) -> Vec<Offer<T>> {
        let mut order = Vec::new();
        let mut last: BTreeMap<u64, &Offer<T>> = BTreeMap::new();
        for e in &self.events {
            if last.insert(e.offer.id, &e.offer).is_none() {
                order.push(e.offer.id);
            }
        }
        order.into_iter().map(|id| last[&id].clone()).collect()
    }

    pub fn committed(&self) -> impl Iterator<Item = &Offer<T>> {
        self.events
            .iter()
            .map(|e| &e.offer)
            .filter(|o| o.status == OfferStatus::Committed)
    }

    /// Checks the protocol invariants: every commit was preceded by both
    /// acceptances, and no offer is both committed and aborted.
    pub fn verify(&self) -> Result<(), String> {
        let mut seen: BTreeMap<u64, BTreeSet<u8>> = BTreeMap::new();
        for e in &self.events {
            let flags = seen.entry(e.offer.id).or_default();
            match e.offer.status {
                OfferStatus::Committed => {
                    if !(flags.contains(&1) && flags.contains(&2)) {
                        return Err(format!("offer {} committed without both acceptances", e.offer.id));
                    }
                    if flags.contains(&4) {
                        return Err(format!("offer {} committed after abort", e.offer.id));
                    }
                    flags.insert(3);
                }
                OfferStatus::Aborted => {
                    if flags.contains(&3) {
                        return Err(format!("offer {} aborted after commit", e.offer.id));
                    }
                    flags.insert(4);
                }
                OfferStatus::AcceptedByDsa => {
                    flags.insert(1);
                }
                OfferStatus::AcceptedByDra => {
                    flags.insert(2);
                }
                OfferStatus::Proposed => {}
            }
        }
        Ok(())
    }

    /// Re-applies every committed transfer to the given starting states.
    pub fn replay(
        &self,
        storage: &mut BTreeMap<AgentId, StorageAgentState<T>>,
        demand: &mut BTreeMap<AgentId, DemandAgentState<T>>,
    ) -> Result<(), MarketError> {
        for offer in self.committed() {
            let dsa = storage.get_mut(&offer.from_dsa).ok_or(MarketError::UnknownAgent(offer.from_dsa))?;
            let dra = demand.get_mut(&offer.to_dra).ok_or(MarketError::UnknownAgent(offer.to_dra))?;
            apply_transfer(offer, dsa, dra);
        }
        Ok(())
    }
}

fn apply_transfer<T: Scalar>(offer: &Offer<T>, dsa: &mut StorageAgentState<T>, dra: &mut DemandAgentState<T>) {
    dsa.soc -= offer.quantity / dsa.eta_d;
    dra.served_energy += offer.quantity;
}

/// Runs the commit protocol for one proposed offer and returns it in its
/// final (`Committed` or `Aborted`) state.
pub fn commit_transaction<T: Scalar>(
    offer: &Offer<T>,
    dsa: &mut StorageAgentState<T>,
    dra: &mut DemandAgentState<T>,
    log: &mut TransactionLog<T>,
) -> Result<Offer<T>, MarketError> {
    if offer.status != OfferStatus::Proposed {
        return Err(MarketError::InvalidTransition {
            offer: offer.id,
            status: offer.status,
        });
    }
    let mut offer = offer.clone();
    log.record(&offer);

    let abort = |mut offer: Offer<T>, log: &mut TransactionLog<T>| {
        offer.status = OfferStatus::Aborted;
        log.record(&offer);
        offer
    };

    if dsa.evaluate_offer(&offer)? == OfferDecision::Reject {
        return Ok(abort(offer, log));
    }
    offer.status = OfferStatus::AcceptedByDsa;
    log.record(&offer);

    if dra.evaluate_offer(&offer)? == OfferDecision::Reject {
        return Ok(abort(offer, log));
    }
    offer.status = OfferStatus::AcceptedByDra;
    log.record(&offer);

    if dsa.soc - offer.quantity / dsa.eta_d < dsa.soc_min {
        return Ok(abort(offer, log));
    }
    apply_transfer(&offer, dsa, dra);
    offer.status = OfferStatus::Committed;
    log.record(&offer);
    Ok(offer)
}
