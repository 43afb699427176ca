//! Perception context construction and the train-only crowding prior.
//!
//! The builder only reads APC counts, calendar fields, POI densities,
//! weather and the crowding prior. It never sees device counts or the
//! anchor map, so anchor values cannot leak into the perception input.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::semantics::{poi_for, SemanticClusterer};
use crate::ingest::PoiTable;
use crate::model::{StopEvent, Trip};

/// One perception input row.
pub type ContextVector = Vec<f64>;

/// Mean ground-truth load per `(stop_id, hour)` over training trips, with
/// the pooled training mean as fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyPrior {
    pub cells: BTreeMap<String, BTreeMap<u8, f64>>,
    pub global: f64,
}

impl OccupancyPrior {
    pub fn fit(trips: &[&Trip]) -> Self {
        let mut acc: BTreeMap<String, BTreeMap<u8, (f64, usize)>> = BTreeMap::new();
        let (mut total, mut n) = (0.0, 0usize);
        for e in trips.iter().flat_map(|t| &t.events) {
            let cell = acc.entry(e.stop_id.clone()).or_default().entry(e.hour_bin).or_insert((0.0, 0));
            cell.0 += f64::from(e.mc_load);
            cell.1 += 1;
            total += f64::from(e.mc_load);
            n += 1;
        }
        let cells = acc
            .into_iter()
            .map(|(stop, hours)| (stop, hours.into_iter().map(|(h, (s, c))| (h, s / c as f64)).collect()))
            .collect();
        OccupancyPrior { cells, global: if n > 0 { total / n as f64 } else { 0.0 } }
    }

    pub fn lookup(&self, stop_id: &str, hour: u8) -> f64 {
        self.cells.get(stop_id).and_then(|h| h.get(&hour)).copied().unwrap_or(self.global)
    }
}

/// Where the crowding prior feature comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OccupancySource {
    /// Train-only fitted prior.
    Fitted(OccupancyPrior),
    /// The `occupancy_prior` field carried by each event (0 when absent).
    EventField,
}

impl OccupancySource {
    fn value(&self, e: &StopEvent) -> f64 {
        match self {
            OccupancySource::Fitted(p) => p.lookup(&e.stop_id, e.hour_bin),
            OccupancySource::EventField => e.occupancy_prior.unwrap_or(0.0),
        }
    }
}

/// Train-fitted description of the context layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBuilder {
    pub semantics: Option<SemanticClusterer>,
    /// Training means used to impute missing weather; `None` disables the
    /// weather block entirely.
    pub weather_means: Option<Vec<f64>>,
    pub occupancy: OccupancySource,
}

const TEMPORAL_DIM: usize = 2 + 7;

impl ContextBuilder {
    /// Fits the weather imputation means on training trips. Weather is
    /// enabled when `use_weather` is set.
    pub fn fit(
        trips: &[&Trip],
        semantics: Option<SemanticClusterer>,
        use_weather: bool,
        occupancy: OccupancySource,
    ) -> Result<Self> {
        let weather_means = if use_weather {
            let mut sums: Option<Vec<f64>> = None;
            let mut n = 0usize;
            for w in trips.iter().flat_map(|t| &t.events).filter_map(|e| e.weather.as_ref()) {
                let s = sums.get_or_insert_with(|| vec![0.0; w.len()]);
                if s.len() != w.len() {
                    return Err(Error::input(format!(
                        "weather vectors of differing length {} and {}",
                        s.len(),
                        w.len()
                    )));
                }
                for (a, x) in s.iter_mut().zip(w) {
                    *a += x;
                }
                n += 1;
            }
            Some(sums.map(|s| s.into_iter().map(|x| x / n as f64).collect()).unwrap_or_default())
        } else {
            None
        };
        Ok(ContextBuilder { semantics, weather_means, occupancy })
    }

    pub fn dim(&self) -> usize {
        2 + TEMPORAL_DIM
            + self.semantics.as_ref().map_or(0, SemanticClusterer::k)
            + self.weather_means.as_ref().map_or(0, |m| m.len() + 1)
            + 1
    }

    /// One context vector per stop event, all of dimension [`Self::dim`].
    pub fn build(&self, trip: &Trip, poi: Option<&PoiTable>) -> Result<Vec<ContextVector>> {
        trip.events.iter().map(|e| self.build_one(e, poi)).collect()
    }

    fn build_one(&self, e: &StopEvent, poi: Option<&PoiTable>) -> Result<ContextVector> {
        let mut x = Vec::with_capacity(self.dim());
        x.push(f64::from(e.apc_board_raw));
        x.push(f64::from(e.apc_alight_raw));
        let seconds = e.timestamp.rem_euclid(86_400) as f64;
        let angle = std::f64::consts::TAU * seconds / 86_400.0;
        x.push(angle.sin());
        x.push(angle.cos());
        let dow = e.day_of_week() as usize;
        x.extend((0..7).map(|d| if d == dow { 1.0 } else { 0.0 }));
        if let Some(sem) = &self.semantics {
            let label = sem.assign(poi_for(e, poi, sem.radius))?;
            x.extend((0..sem.k()).map(|j| if j == label { 1.0 } else { 0.0 }));
        }
        if let Some(means) = &self.weather_means {
            match &e.weather {
                Some(w) if w.len() == means.len() => {
                    x.extend_from_slice(w);
                    x.push(0.0);
                }
                Some(w) => {
                    return Err(Error::input(format!(
                        "weather vector of length {} where {} was fitted",
                        w.len(),
                        means.len()
                    )))
                }
                None => {
                    x.extend_from_slice(means);
                    x.push(1.0);
                }
            }
        }
        x.push(self.occupancy.value(e));
        debug_assert_eq!(x.len(), self.dim());
        Ok(x)
    }
}
