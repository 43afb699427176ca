//! Shared domain types: stop events, trips, the capacity bound and the
//! per-stop trace of the estimation cascade.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum onboard load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Capacity(f64);

impl Capacity {
    pub const DEFAULT: Capacity = Capacity(80.0);

    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() && c > 0.0 {
            Ok(Capacity(c))
        } else {
            Err(Error::Config(format!("capacity must be > 0, got {c}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn clamp(self, load: f64) -> f64 {
        load.clamp(0.0, self.0)
    }

    #[inline]
    pub fn contains(self, load: f64) -> bool {
        (0.0..=self.0).contains(&load)
    }
}

impl Default for Capacity {
    fn default() -> Self {
        Capacity::DEFAULT
    }
}

/// One aligned stop-service record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopEvent {
    pub trip_id: String,
    pub stop_index: usize,
    pub stop_id: String,
    /// Seconds since epoch, local time.
    pub timestamp: i64,
    pub hour_bin: u8,
    pub apc_board_raw: u32,
    pub apc_alight_raw: u32,
    pub mc_board: u32,
    pub mc_alight: u32,
    pub mc_load: u32,
    pub wifi_count: Option<u32>,
    pub wifi_valid: bool,
    /// `None` when the weather feed had no observation for this stop.
    pub weather: Option<Vec<f64>>,
    /// Externally supplied crowding prior. The evaluation pipeline ignores
    /// it and fits its own train-only prior.
    pub occupancy_prior: Option<f64>,
    pub poi_density: Vec<f64>,
}

impl StopEvent {
    /// Hour-of-day bin for a local-time timestamp.
    pub fn hour_of(timestamp: i64) -> u8 {
        (timestamp.rem_euclid(86_400) / 3_600) as u8
    }

    /// Day of week for a local-time timestamp, Monday = 0.
    pub fn day_of_week(&self) -> u8 {
        // 1970-01-01 was a Thursday.
        ((self.timestamp.div_euclid(86_400) + 3).rem_euclid(7)) as u8
    }

    pub fn anchor_count(&self) -> Option<u32> {
        if self.wifi_valid {
            self.wifi_count
        } else {
            None
        }
    }
}

/// Ordered stop events of one vehicle run; the atomic unit for splitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub trip_id: String,
    pub events: Vec<StopEvent>,
}

impl Trip {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn mc_load(&self) -> Vec<f64> {
        self.events.iter().map(|e| f64::from(e.mc_load)).collect()
    }

    /// Checks the structural invariants: consecutive stop indices, matching
    /// trip ids, hour bins in range and `wifi_valid` implying a count.
    pub fn validate_structure(&self) -> Result<()> {
        for (k, e) in self.events.iter().enumerate() {
            if e.trip_id != self.trip_id {
                return Err(Error::input(format!(
                    "trip {}: event {k} carries trip id {}",
                    self.trip_id, e.trip_id
                )));
            }
            if e.stop_index != k {
                return Err(Error::input(format!(
                    "trip {}: stop_index {} at position {k}",
                    self.trip_id, e.stop_index
                )));
            }
            if e.hour_bin > 23 {
                return Err(Error::input(format!(
                    "trip {}: hour_bin {} out of range",
                    self.trip_id, e.hour_bin
                )));
            }
            if e.wifi_valid && e.wifi_count.is_none() {
                return Err(Error::input(format!(
                    "trip {} stop {k}: wifi_valid without wifi_count",
                    self.trip_id
                )));
            }
        }
        Ok(())
    }

    /// Verifies that ground truth follows the conservation recursion from an
    /// empty vehicle and stays within capacity.
    pub fn check_conservation(&self, capacity: Capacity) -> Result<()> {
        let mut prev: i64 = 0;
        for e in &self.events {
            let expect = prev - i64::from(e.mc_alight) + i64::from(e.mc_board);
            if i64::from(e.mc_load) != expect {
                return Err(Error::CorpusInvariant(format!(
                    "trip {} stop {}: mc_load {} but recursion gives {expect}",
                    self.trip_id, e.stop_index, e.mc_load
                )));
            }
            if !capacity.contains(f64::from(e.mc_load)) {
                return Err(Error::CorpusInvariant(format!(
                    "trip {} stop {}: mc_load {} exceeds capacity",
                    self.trip_id,
                    e.stop_index,
                    e.mc_load
                )));
            }
            prev = expect;
        }
        Ok(())
    }
}

/// Diagnostic record of the cascade at one stop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub b_hat: f64,
    pub a_hat: f64,
    pub a_star: f64,
    pub b_star: f64,
    pub l_phys: f64,
    pub e_phys: f64,
    /// Anchor load; absent when no valid anchor exists at this stop.
    pub y_load: Option<f64>,
    /// Disagreement; absent without an anchor.
    pub disagreement: Option<f64>,
    /// Trust weight on the physical state; absent without an anchor, which
    /// is equivalent to 1.
    pub alpha: Option<f64>,
    pub l_fused: f64,
}

impl StepTrace {
    pub fn alpha_or_one(&self) -> f64 {
        self.alpha.unwrap_or(1.0)
    }
}

/// Full per-trip output of the recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub trip_id: String,
    pub steps: Vec<StepTrace>,
    /// Load estimate after the optional trip-level shift.
    pub l_final: Vec<f64>,
    /// Unclamped cumulative sum of the flow proposals.
    pub shadow: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn fused(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.l_fused).collect()
    }

    pub fn anchors(&self) -> Vec<Option<f64>> {
        self.steps.iter().map(|s| s.y_load).collect()
    }

    pub fn e_phys(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.e_phys).collect()
    }
}

/// Unconstrained cumulative load `l0 + sum_{t<=k} (b_t - a_t)`.
pub fn shadow_trajectory(b_hats: &[f64], a_hats: &[f64], l0: f64) -> Result<Vec<f64>> {
    if b_hats.len() != a_hats.len() {
        return Err(Error::input(format!(
            "shadow: {} boardings vs {} alightings",
            b_hats.len(),
            a_hats.len()
        )));
    }
    if !(l0 >= 0.0) {
        return Err(Error::input(format!("shadow: initial load {l0} < 0")));
    }
    let mut acc = l0;
    Ok(b_hats
        .iter()
        .zip(a_hats)
        .map(|(b, a)| {
            acc += b - a;
            acc
        })
        .collect())
}

/// Fraction of shadow entries outside `[0, C]`.
pub fn shadow_infeasibility_rate(shadow: &[f64], capacity: Capacity) -> Result<f64> {
    if shadow.is_empty() {
        return Err(Error::input("shadow infeasibility of an empty series"));
    }
    let bad = shadow.iter().filter(|&&l| !capacity.contains(l)).count();
    Ok(bad as f64 / shadow.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shadow_examples() {
        assert_eq!(shadow_trajectory(&[5.0, 3.0], &[0.0, 10.0], 0.0).unwrap(), vec![5.0, -2.0]);
        assert!(shadow_trajectory(&[], &[], 0.0).unwrap().is_empty());
        assert_eq!(
            shadow_trajectory(&[2.0, 2.0, 2.0], &[1.0, 1.0, 1.0], 1.0).unwrap(),
            vec![2.0, 3.0, 4.0]
        );
    }

    #[test]
    fn shadow_rejects_mismatch() {
        assert!(matches!(shadow_trajectory(&[1.0], &[], 0.0), Err(Error::Input(_))));
        assert!(shadow_trajectory(&[1.0], &[1.0], -1.0).is_err());
    }

    #[test]
    fn infeasibility_examples() {
        let c = Capacity::DEFAULT;
        assert!((shadow_infeasibility_rate(&[5.0, -2.0, 81.0], c).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(shadow_infeasibility_rate(&[0.0, 80.0], c).unwrap(), 0.0);
        assert_eq!(shadow_infeasibility_rate(&[-1.0], c).unwrap(), 1.0);
        assert!(shadow_infeasibility_rate(&[], c).is_err());
    }

    #[test]
    fn capacity_validation() {
        assert!(Capacity::new(0.0).is_err());
        assert!(Capacity::new(f64::NAN).is_err());
        assert_eq!(Capacity::new(80.0).unwrap(), Capacity::DEFAULT);
    }

    #[test]
    fn calendar_helpers() {
        // 1970-01-05 was a Monday; 13:30 local.
        let ts = 4 * 86_400 + 13 * 3_600 + 1_800;
        assert_eq!(StopEvent::hour_of(ts), 13);
        let e = StopEvent {
            trip_id: "t".into(),
            stop_index: 0,
            stop_id: "s".into(),
            timestamp: ts,
            hour_bin: 13,
            apc_board_raw: 0,
            apc_alight_raw: 0,
            mc_board: 0,
            mc_alight: 0,
            mc_load: 0,
            wifi_count: None,
            wifi_valid: false,
            weather: None,
            occupancy_prior: None,
            poi_density: vec![],
        };
        assert_eq!(e.day_of_week(), 0);
    }

    proptest! {
        #[test]
        fn shadow_is_linear(
            flows in proptest::collection::vec((0.0f64..50.0, 0.0f64..50.0, 0.0f64..50.0, 0.0f64..50.0), 0..30),
            l0 in 0.0f64..40.0,
            l1 in 0.0f64..40.0,
        ) {
            let b: Vec<f64> = flows.iter().map(|f| f.0).collect();
            let a: Vec<f64> = flows.iter().map(|f| f.1).collect();
            let b2: Vec<f64> = flows.iter().map(|f| f.2).collect();
            let a2: Vec<f64> = flows.iter().map(|f| f.3).collect();
            let bs: Vec<f64> = b.iter().zip(&b2).map(|(x, y)| x + y).collect();
            let as_: Vec<f64> = a.iter().zip(&a2).map(|(x, y)| x + y).collect();
            let lhs = shadow_trajectory(&bs, &as_, l0 + l1).unwrap();
            let r1 = shadow_trajectory(&b, &a, l0).unwrap();
            let r2 = shadow_trajectory(&b2, &a2, l1).unwrap();
            for k in 0..lhs.len() {
                prop_assert!((lhs[k] - (r1[k] + r2[k])).abs() < 1e-9);
            }
        }
    }
}
