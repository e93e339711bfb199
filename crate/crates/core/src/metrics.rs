//! Performance-index timelines and resilience figures of merit.
//!
//! The performance index of a slot is the served fraction of demand. The
//! eight-point curve places its breakpoints at fixed geometric landmarks of the
//! timeline (see [`CurveLabel`]), and the loss area integrates the shortfall
//! below the pre-event level.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("slot {t}: negative power")]
    NegativePower { t: u32 },
    #[error("slot {t}: served exceeds demanded")]
    ServedExceedsDemand { t: u32 },
    #[error("timeline is empty")]
    EmptyTimeline,
}

/// Served and demanded power of one region in one slot, kW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionLoad<T> {
    pub served: T,
    pub demanded: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSample<T> {
    pub t: u32,
    pub served: T,
    pub demanded: T,
    pub index: T,
}

/// Aggregates per-region loads into one sample per slot. A slot with no
/// demand has index 1.
pub fn build_timeline<T: Scalar>(slots: &[(u32, Vec<RegionLoad<T>>)]) -> Result<Vec<PerformanceSample<T>>, MetricsError> {
    let zero = T::zero();
    let slack = T::lit(1e-9);
    slots
        .iter()
        .map(|(t, loads)| {
            let t = *t;
            for l in loads {
                if l.served < zero || l.demanded < zero {
                    return Err(MetricsError::NegativePower { t });
                }
                if l.served > l.demanded + slack * l.demanded.max(T::one()) {
                    return Err(MetricsError::ServedExceedsDemand { t });
                }
            }
            let served: T = loads.iter().map(|l| l.served.min(l.demanded)).sum();
            let demanded: T = loads.iter().map(|l| l.demanded).sum();
            let index = if demanded > zero { (served / demanded).min(T::one()) } else { T::one() };
            Ok(PerformanceSample { t, served, demanded, index })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveLabel {
    /// First sample.
    Normal,
    /// Last sample at the pre-event level before the index first drops.
    EventStart,
    /// End of the first plateau between the drop and the minimum.
    PreventiveEnd,
    /// First sample at the global minimum.
    MinimumReached,
    /// Last sample of that minimum run.
    RestorationStart,
    /// Timeline value halfway (in time) through the recovery ramp.
    PartialRecovery,
    /// First return to the pre-event level after the minimum.
    FullRestoration,
    /// Last sample.
    ObservationEnd,
}

pub const CURVE_LABELS: [CurveLabel; 8] = [
    CurveLabel::Normal,
    CurveLabel::EventStart,
    CurveLabel::PreventiveEnd,
    CurveLabel::MinimumReached,
    CurveLabel::RestorationStart,
    CurveLabel::PartialRecovery,
    CurveLabel::FullRestoration,
    CurveLabel::ObservationEnd,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint<T> {
    pub label: CurveLabel,
    /// Slot index (fractional only for the partial-recovery point).
    pub t: T,
    pub p: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EightPointCurve<T> {
    pub points: Vec<CurvePoint<T>>,
    pub t_d: T,
    pub t_m: T,
    pub p_min: T,
}

impl<T: Scalar> EightPointCurve<T> {
    pub fn point(&self, label: CurveLabel) -> &CurvePoint<T> {
        self.points.iter().find(|p| p.label == label).expect("all labels present")
    }

    /// Piecewise-linear value at `t`, held constant outside the breakpoints.
    pub fn value_at(&self, t: T) -> T {
        interpolate(self.points.iter().map(|p| (p.t, p.p)), t)
    }

    /// Largest absolute gap between the approximation and the raw samples.
    pub fn max_deviation(&self, timeline: &[PerformanceSample<T>]) -> T {
        timeline
            .iter()
            .map(|s| (self.value_at(slot_time(s.t)) - s.index).abs())
            .fold(T::zero(), T::max)
    }
}

fn slot_time<T: Scalar>(t: u32) -> T {
    T::lit(f64::from(t))
}

fn interpolate<T: Scalar>(points: impl Iterator<Item = (T, T)>, t: T) -> T {
    let mut prev: Option<(T, T)> = None;
    let mut last = T::zero();
    for (tk, pk) in points {
        match prev {
            None if t <= tk => return pk,
            Some((t0, p0)) if t <= tk => {
                return if t < tk && tk > t0 {
                    (p0 + (pk - p0) * (t - t0) / (tk - t0)).max(p0.min(pk)).min(p0.max(pk))
                } else {
                    pk
                };
            }
            _ => {}
        }
        prev = Some((tk, pk));
        last = pk;
    }
    last
}

const LEVEL_TOL: f64 = 1e-6;

pub fn eight_point_approx<T: Scalar>(timeline: &[PerformanceSample<T>]) -> Result<EightPointCurve<T>, MetricsError> {
    if timeline.is_empty() {
        return Err(MetricsError::EmptyTimeline);
    }
    let n = timeline.len();
    let p: Vec<T> = timeline.iter().map(|s| s.index).collect();
    let t: Vec<T> = timeline.iter().map(|s| slot_time(s.t)).collect();
    let tol = T::lit(LEVEL_TOL);
    let p_pre = p[0];

    let p_min = p.iter().copied().fold(T::infinity(), T::min);
    let i_min = p.iter().position(|&v| v == p_min).expect("non-empty");
    let i_rest = (i_min..n).take_while(|&k| p[k] == p_min).last().unwrap_or(i_min);

    let (event_start, preventive_end) = match (1..n).find(|&k| p[k] < p_pre - tol) {
        None => (i_min, i_min),
        Some(k_drop) => {
            let start = k_drop - 1;
            let plateau = (k_drop..i_min).find(|&j| j + 1 < i_min && (p[j + 1] - p[j]).abs() <= T::epsilon());
            let end = plateau.map_or(start, |j| {
                (j..i_min).take_while(|&k| (p[k] - p[j]).abs() <= T::epsilon()).last().unwrap_or(j)
            });
            (start, end)
        }
    };
    let full = (i_rest + 1..n).find(|&k| p[k] >= p_pre - tol).unwrap_or(n - 1);
    let t_mid = (t[i_rest] + t[full]) / T::lit(2.0);
    let p_mid = interpolate(t.iter().copied().zip(p.iter().copied()), t_mid);

    let at = |label, k: usize| CurvePoint { label, t: t[k], p: p[k] };
    let points = vec![
        at(CurveLabel::Normal, 0),
        at(CurveLabel::EventStart, event_start),
        at(CurveLabel::PreventiveEnd, preventive_end),
        at(CurveLabel::MinimumReached, i_min),
        at(CurveLabel::RestorationStart, i_rest),
        CurvePoint {
            label: CurveLabel::PartialRecovery,
            t: t_mid,
            p: p_mid,
        },
        at(CurveLabel::FullRestoration, full),
        at(CurveLabel::ObservationEnd, n - 1),
    ];
    Ok(EightPointCurve {
        points,
        t_d: t[event_start],
        t_m: t[i_min],
        p_min,
    })
}

/// Area of `max(0, p_pre − P(t))` under the piecewise-linear curve through
/// `points` (time, index). Repeated times give vertical edges.
pub fn loss_area<T: Scalar>(points: &[(T, T)], p_pre: T) -> T {
    let half = T::lit(0.5);
    points
        .windows(2)
        .map(|w| {
            let ((t0, p0), (t1, p1)) = (w[0], w[1]);
            let h = t1 - t0;
            let (d0, d1) = (p_pre - p0, p_pre - p1);
            if d0 >= T::zero() && d1 >= T::zero() {
                (d0 + d1) * half * h
            } else if d0 <= T::zero() && d1 <= T::zero() {
                T::zero()
            } else {
                let pos = d0.max(d1);
                pos * pos / (d0 - d1).abs() * half * h
            }
        })
        .sum()
}

/// Loss area of a timeline in index·hours, relative to its first sample.
pub fn resilience_loss<T: Scalar>(timeline: &[PerformanceSample<T>], dt: T) -> T {
    let Some(first) = timeline.first() else {
        return T::zero();
    };
    let points: Vec<(T, T)> = timeline.iter().map(|s| (slot_time::<T>(s.t) * dt, s.index)).collect();
    loss_area(&points, first.index)
}

/// kWh of demand left unserved.
pub fn unserved_energy<T: Scalar>(timeline: &[PerformanceSample<T>], dt: T) -> T {
    timeline.iter().map(|s| (s.demanded - s.served).max(T::zero()) * dt).sum()
}

pub fn monetary_loss<T: Scalar>(timeline: &[PerformanceSample<T>], voll: T, dt: T) -> T {
    unserved_energy(timeline, dt) * voll
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceReport<T> {
    /// index·hours
    pub loss_area: T,
    /// kWh
    pub unserved_energy: T,
    /// $
    pub monetary_loss: T,
    pub p_min: T,
    /// Hours with index strictly below the threshold.
    pub time_below_threshold: T,
}

pub fn resilience_report<T: Scalar>(
    timeline: &[PerformanceSample<T>],
    dt: T,
    voll: T,
    threshold: T,
) -> Result<ResilienceReport<T>, MetricsError> {
    if timeline.is_empty() {
        return Err(MetricsError::EmptyTimeline);
    }
    let below = timeline.iter().filter(|s| s.index < threshold).count();
    Ok(ResilienceReport {
        loss_area: resilience_loss(timeline, dt),
        unserved_energy: unserved_energy(timeline, dt),
        monetary_loss: monetary_loss(timeline, voll, dt),
        p_min: timeline.iter().map(|s| s.index).fold(T::infinity(), T::min),
        time_below_threshold: T::lit(below as f64) * dt,
    })
}
