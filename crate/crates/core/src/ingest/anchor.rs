//! Hour-stratified Wi-Fi anchor: persons-per-device ratios fitted as a
//! ratio of sums over training stops.

use serde::{Deserialize, Serialize};

use crate::model::Trip;

pub const RATIO_MIN: f64 = 0.1;
pub const RATIO_MAX: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorMap {
    /// Ratio per hour bin, each within `[RATIO_MIN, RATIO_MAX]`.
    pub ratios: Vec<f64>,
    /// Pooled ratio; `None` when the training data held no usable anchors,
    /// in which case the map is unusable.
    pub global: Option<f64>,
    /// Hours that fell back to the pooled ratio.
    pub fallback_hours: Vec<u8>,
}

impl AnchorMap {
    pub fn is_usable(&self) -> bool {
        self.global.is_some()
    }

    pub fn ratio(&self, hour: u8) -> Option<f64> {
        if self.is_usable() {
            self.ratios.get(hour as usize).copied()
        } else {
            None
        }
    }

    /// Load anchor `ratio(hour) * devices`; `None` on an unusable map.
    pub fn apply(&self, devices: u32, hour: u8) -> Option<f64> {
        self.ratio(hour).map(|r| r * f64::from(devices))
    }

    /// Anchor for every stop of a trip, `None` where the stop has no valid
    /// device count or the map is unusable.
    pub fn anchors_for(&self, trip: &Trip) -> Vec<Option<f64>> {
        trip.events
            .iter()
            .map(|e| e.anchor_count().and_then(|w| self.apply(w, e.hour_bin)))
            .collect()
    }
}

fn clip(r: f64) -> f64 {
    r.clamp(RATIO_MIN, RATIO_MAX)
}

pub fn fit_anchor_map(trips: &[&Trip]) -> AnchorMap {
    let mut load = [0.0f64; 24];
    let mut devices = [0.0f64; 24];
    for e in trips.iter().flat_map(|t| &t.events) {
        if let Some(w) = e.anchor_count().filter(|&w| w > 0) {
            load[e.hour_bin as usize] += f64::from(e.mc_load);
            devices[e.hour_bin as usize] += f64::from(w);
        }
    }
    let total_devices: f64 = devices.iter().sum();
    let global = (total_devices > 0.0).then(|| clip(load.iter().sum::<f64>() / total_devices));
    let mut fallback_hours = Vec::new();
    let ratios = (0..24)
        .map(|h| {
            if devices[h] > 0.0 {
                clip(load[h] / devices[h])
            } else {
                fallback_hours.push(h as u8);
                global.unwrap_or(1.0)
            }
        })
        .collect();
    AnchorMap { ratios, global, fallback_hours }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StopEvent;

    fn event(k: usize, hour: u8, load: u32, w: Option<u32>) -> StopEvent {
        StopEvent {
            trip_id: "t".into(),
            stop_index: k,
            stop_id: format!("s{k}"),
            timestamp: i64::from(hour) * 3600,
            hour_bin: hour,
            apc_board_raw: 0,
            apc_alight_raw: 0,
            mc_board: 0,
            mc_alight: 0,
            mc_load: load,
            wifi_count: w,
            wifi_valid: w.is_some(),
            weather: None,
            occupancy_prior: None,
            poi_density: vec![],
        }
    }

    fn trip(events: Vec<StopEvent>) -> Trip {
        Trip { trip_id: "t".into(), events }
    }

    #[test]
    fn ratio_of_sums() {
        let t = trip(vec![event(0, 8, 20, Some(10)), event(1, 8, 10, Some(10))]);
        let m = fit_anchor_map(&[&t]);
        assert_eq!(m.ratios[8], 1.5);
        assert_eq!(m.apply(10, 8), Some(15.0));
    }

    #[test]
    fn clipped_to_range() {
        let t = trip(vec![event(0, 9, 600, Some(100)), event(1, 10, 1, Some(100))]);
        let m = fit_anchor_map(&[&t]);
        assert_eq!(m.ratios[9], 5.0);
        assert_eq!(m.ratios[10], 0.1);
        assert_eq!(m.apply(0, 10), Some(0.0));
    }

    #[test]
    fn empty_bin_uses_pooled_ratio() {
        let t = trip(vec![event(0, 8, 12, Some(10)), event(1, 9, 12, Some(10))]);
        let m = fit_anchor_map(&[&t]);
        assert_eq!(m.global, Some(1.2));
        assert_eq!(m.ratios[3], 1.2);
        assert!(m.fallback_hours.contains(&3));
        assert!(!m.fallback_hours.contains(&8));
    }

    #[test]
    fn zero_device_counts_are_ignored() {
        let t = trip(vec![event(0, 8, 5, Some(0)), event(1, 8, 20, Some(10))]);
        assert_eq!(fit_anchor_map(&[&t]).ratios[8], 2.0);
    }

    #[test]
    fn no_anchors_means_unusable() {
        let t = trip(vec![event(0, 8, 5, None)]);
        let m = fit_anchor_map(&[&t]);
        assert!(!m.is_usable());
        assert_eq!(m.apply(10, 8), None);
        assert_eq!(m.anchors_for(&t), vec![None]);
        assert!(m.ratios.iter().all(|r| (RATIO_MIN..=RATIO_MAX).contains(r)));
    }
}
