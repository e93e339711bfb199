use std::collections::BTreeMap;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationRequest<T> {
    /// kW asked for.
    pub requested: T,
    /// kW actually needed; anything granted beyond this is surplus.
    pub need: T,
    pub priority: T,
}

impl<T: Scalar> AllocationRequest<T> {
    pub fn new(requested: T) -> Self {
        Self {
            requested,
            need: requested,
            priority: T::one(),
        }
    }

    pub fn with_need(mut self, need: T) -> Self {
        self.need = need;
        self
    }

    pub fn with_priority(mut self, priority: T) -> Self {
        self.priority = priority;
        self
    }

    fn cap(&self) -> T {
        self.requested.min(self.need).max(T::zero())
    }
}

/// Splits `available` kW among requests.
///
/// With enough supply everyone gets what they need. Otherwise supply is
/// shared in proportion to `priority × requested`; any share above an
/// agent's need is handed back and re-shared among the rest until nobody is
/// over-served. The grants never sum above `available`.
pub fn allocate_power<K: Ord + Copy, T: Scalar>(
    requests: &BTreeMap<K, AllocationRequest<T>>,
    available: T,
) -> BTreeMap<K, T> {
    let zero = T::zero();
    let available = available.max(zero);
    let mut granted: BTreeMap<K, T> = requests.keys().map(|&k| (k, zero)).collect();

    let total: T = requests.values().map(|r| r.requested.max(zero)).sum();
    if total <= available {
        for (k, r) in requests {
            granted.insert(*k, r.cap());
        }
        return enforce_budget(granted, available);
    }

    let mut active: Vec<K> = requests.iter().filter(|(_, r)| r.cap() > zero).map(|(&k, _)| k).collect();
    let mut remaining = available;
    while !active.is_empty() && remaining > zero {
        let weighted: T = active.iter().map(|k| requests[k].priority * requests[k].requested).sum();
        let by_request = weighted <= zero;
        let denom = if by_request {
            active.iter().map(|k| requests[k].requested).sum()
        } else {
            weighted
        };
        let share = |k: &K| {
            let r = &requests[k];
            let w = if by_request { r.requested } else { r.priority * r.requested };
            remaining * w / denom
        };
        let (capped, open): (Vec<K>, Vec<K>) = active.iter().partition(|k| share(k) >= requests[k].cap());
        if capped.is_empty() {
            for k in &open {
                granted.insert(*k, share(k));
            }
            break;
        }
        for k in &capped {
            let cap = requests[k].cap();
            granted.insert(*k, cap);
            remaining = (remaining - cap).max(zero);
        }
        active = open;
    }
    enforce_budget(granted, available)
}

/// Shaves rounding excess off the largest grant so the sum stays within budget.
fn enforce_budget<K: Ord + Copy, T: Scalar>(mut granted: BTreeMap<K, T>, available: T) -> BTreeMap<K, T> {
    for _ in 0..8 {
        let total: T = granted.values().copied().sum();
        if total <= available {
            break;
        }
        let excess = total - available;
        let largest = granted
            .iter()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(&k, _)| k);
        if let Some(k) = largest {
            let g = granted.get_mut(&k).expect("key exists");
            *g = (*g - excess).max(T::zero());
        }
    }
    granted
}
