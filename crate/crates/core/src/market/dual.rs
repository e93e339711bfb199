use serde::{Deserialize, Serialize};

use super::MarketError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", content = "c0", rename_all = "snake_case")]
pub enum StepSchedule<T> {
    /// ζ = c₀ every iteration.
    Constant(T),
    /// ζ = c₀/√m.
    Diminishing(T),
}

impl<T: Scalar> StepSchedule<T> {
    pub fn step_size(&self, m: u32) -> T {
        debug_assert!(m >= 1);
        match *self {
            StepSchedule::Constant(c0) => c0,
            StepSchedule::Diminishing(c0) => c0 / T::lit(f64::from(m.max(1))).sqrt(),
        }
    }

    pub fn c0(&self) -> T {
        match *self {
            StepSchedule::Constant(c0) | StepSchedule::Diminishing(c0) => c0,
        }
    }
}

/// Grid-wide multipliers at iteration `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState<T> {
    pub lambda: Vec<T>,
    pub m: u32,
    pub zeta: T,
    pub schedule: StepSchedule<T>,
}

impl<T: Scalar> DualState<T> {
    pub fn new(lambda: Vec<T>, schedule: StepSchedule<T>) -> Self {
        let lambda = lambda.into_iter().map(|l| l.max(T::zero())).collect();
        Self {
            lambda,
            m: 1,
            zeta: schedule.step_size(1),
            schedule,
        }
    }

    pub fn zeros(len: usize, schedule: StepSchedule<T>) -> Self {
        Self::new(vec![T::zero(); len], schedule)
    }

    /// Projected subgradient step `λ ← [λ + ζ·g]⁺` with `g = Σ A_b x_b − c`.
    pub fn dual_update(&self, violation: &[T]) -> Result<Self, MarketError> {
        if violation.len() != self.lambda.len() {
            return Err(MarketError::DimensionMismatch {
                expected: self.lambda.len(),
                got: violation.len(),
            });
        }
        let lambda = self
            .lambda
            .iter()
            .zip(violation)
            .map(|(&l, &g)| (l + self.zeta * g).max(T::zero()))
            .collect();
        let m = self.m + 1;
        Ok(Self {
            lambda,
            m,
            zeta: self.schedule.step_size(m),
            schedule: self.schedule,
        })
    }
}
