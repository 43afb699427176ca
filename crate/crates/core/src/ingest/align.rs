//! Attaches timestamped sensor records to the stop-event backbone.
//!
//! A record attaches to the nearest stop arrival of its trip (ties go to the
//! earlier stop) when within the tolerance window. When several records
//! compete for one stop, the nearest wins and ties go to the earlier record.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ingest::PoiTable;
use crate::model::{StopEvent, Trip};

pub const DEFAULT_TOLERANCE_SECONDS: i64 = 60;

/// Backbone entry: a vehicle serving a stop.
#[derive(Debug, Clone, PartialEq)]
pub struct StopArrival {
    pub trip_id: String,
    pub stop_index: usize,
    pub stop_id: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorRecord<T> {
    pub trip_id: String,
    pub timestamp: i64,
    pub payload: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApcCounts {
    pub board: u32,
    pub alight: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManualCount {
    pub board: u32,
    pub alight: u32,
    pub load: u32,
}

/// Per-stream attachment bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AlignStats {
    pub attached: usize,
    /// Nearest stop farther away than the tolerance.
    pub out_of_tolerance: usize,
    /// Lost the competition for a stop to a nearer or earlier record.
    pub superseded: usize,
    /// Trip id not present in the backbone.
    pub orphaned: usize,
    /// Rejected while parsing, before alignment.
    pub unparseable: usize,
}

impl AlignStats {
    pub fn dropped(&self) -> usize {
        self.out_of_tolerance + self.superseded + self.orphaned + self.unparseable
    }
}

/// Attaches records to the arrivals of one trip. `arrivals` must be ordered
/// by stop index.
pub fn attach<T: Clone>(
    arrivals: &[StopArrival],
    records: &[&SensorRecord<T>],
    tolerance_seconds: i64,
    stats: &mut AlignStats,
) -> Vec<Option<T>> {
    // (distance, record timestamp, input position) of the current winner.
    let mut best: Vec<Option<(i64, i64, usize)>> = vec![None; arrivals.len()];
    for (pos, r) in records.iter().enumerate() {
        let mut nearest: Option<(usize, i64)> = None;
        for (k, a) in arrivals.iter().enumerate() {
            let d = (r.timestamp - a.timestamp).abs();
            if nearest.is_none_or(|(_, bd)| d < bd) {
                nearest = Some((k, d));
            }
        }
        let Some((k, d)) = nearest else { continue };
        if d > tolerance_seconds {
            stats.out_of_tolerance += 1;
            continue;
        }
        let candidate = (d, r.timestamp, pos);
        match best[k] {
            Some(cur) if cur <= candidate => stats.superseded += 1,
            Some(_) => {
                stats.superseded += 1;
                best[k] = Some(candidate);
            }
            None => best[k] = Some(candidate),
        }
    }
    best.iter()
        .map(|b| {
            b.map(|(_, _, pos)| {
                stats.attached += 1;
                records[pos].payload.clone()
            })
        })
        .collect()
}

/// Raw multi-stream input for [`align`].
#[derive(Debug, Clone, Default)]
pub struct RawStreams {
    pub arrivals: Vec<StopArrival>,
    pub apc: Vec<SensorRecord<ApcCounts>>,
    pub wifi: Vec<SensorRecord<u32>>,
    pub weather: Vec<SensorRecord<Vec<f64>>>,
    /// Manual counts keyed by `(trip_id, stop_index)`.
    pub manual: BTreeMap<(String, usize), ManualCount>,
    pub poi: Option<PoiTable>,
    pub poi_radius: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlignReport {
    pub apc: AlignStats,
    pub wifi: AlignStats,
    pub weather: AlignStats,
    /// Stops without an APC record; their raw counts are set to 0.
    pub stops_missing_apc: usize,
    /// Trips whose manual counts break the load recursion from an empty
    /// vehicle. They are kept; the first offending stop is named.
    pub conservation_warnings: Vec<String>,
}

fn group<'a, T>(records: &'a [SensorRecord<T>], trips: &BTreeMap<String, Vec<StopArrival>>, stats: &mut AlignStats) -> BTreeMap<String, Vec<&'a SensorRecord<T>>> {
    let mut out: BTreeMap<String, Vec<&SensorRecord<T>>> = BTreeMap::new();
    for r in records {
        if trips.contains_key(&r.trip_id) {
            out.entry(r.trip_id.clone()).or_default().push(r);
        } else {
            stats.orphaned += 1;
        }
    }
    out
}

/// Aligns raw streams onto the stop-event backbone. Every backbone stop
/// needs a manual count; sensor records are optional.
pub fn align(raw: &RawStreams, tolerance_seconds: i64) -> Result<(Vec<Trip>, AlignReport)> {
    let mut by_trip: BTreeMap<String, Vec<StopArrival>> = BTreeMap::new();
    for a in &raw.arrivals {
        by_trip.entry(a.trip_id.clone()).or_default().push(a.clone());
    }
    for arrivals in by_trip.values_mut() {
        arrivals.sort_by_key(|a| a.stop_index);
    }

    let mut report = AlignReport::default();
    let apc = group(&raw.apc, &by_trip, &mut report.apc);
    let wifi = group(&raw.wifi, &by_trip, &mut report.wifi);
    let weather = group(&raw.weather, &by_trip, &mut report.weather);

    let mut trips = Vec::with_capacity(by_trip.len());
    for (trip_id, arrivals) in &by_trip {
        let empty = Vec::new();
        let apc_at = attach(arrivals, apc.get(trip_id).unwrap_or(&empty), tolerance_seconds, &mut report.apc);
        let empty = Vec::new();
        let wifi_at = attach(arrivals, wifi.get(trip_id).unwrap_or(&empty), tolerance_seconds, &mut report.wifi);
        let empty = Vec::new();
        let weather_at = attach(arrivals, weather.get(trip_id).unwrap_or(&empty), tolerance_seconds, &mut report.weather);

        let mut events = Vec::with_capacity(arrivals.len());
        for (k, a) in arrivals.iter().enumerate() {
            let mc = raw.manual.get(&(trip_id.clone(), a.stop_index)).ok_or_else(|| {
                Error::input(format!("trip {trip_id} stop {}: no manual count", a.stop_index))
            })?;
            let counts = apc_at[k].unwrap_or_else(|| {
                report.stops_missing_apc += 1;
                ApcCounts { board: 0, alight: 0 }
            });
            let poi_density = raw
                .poi
                .as_ref()
                .and_then(|t| t.get(&a.stop_id, raw.poi_radius))
                .map(<[f64]>::to_vec)
                .unwrap_or_default();
            events.push(StopEvent {
                trip_id: trip_id.clone(),
                stop_index: a.stop_index,
                stop_id: a.stop_id.clone(),
                timestamp: a.timestamp,
                hour_bin: StopEvent::hour_of(a.timestamp),
                apc_board_raw: counts.board,
                apc_alight_raw: counts.alight,
                mc_board: mc.board,
                mc_alight: mc.alight,
                mc_load: mc.load,
                wifi_count: wifi_at[k],
                wifi_valid: wifi_at[k].is_some(),
                weather: weather_at[k].clone(),
                occupancy_prior: None,
                poi_density,
            });
        }
        let trip = Trip { trip_id: trip_id.clone(), events };
        trip.validate_structure()?;
        let mut load = 0i64;
        for e in &trip.events {
            load += i64::from(e.mc_board) - i64::from(e.mc_alight);
            if load != i64::from(e.mc_load) {
                report.conservation_warnings.push(format!(
                    "trip {trip_id} stop {}: mc_load {} but recursion gives {load}",
                    e.stop_index, e.mc_load
                ));
                break;
            }
        }
        trips.push(trip);
    }
    Ok((trips, report))
}

/// Parses `trip_id,timestamp,count` lines of a Wi-Fi stream. Lines that do
/// not parse are counted and skipped.
pub fn parse_wifi_lines(text: &str, stats: &mut AlignStats) -> Vec<SensorRecord<u32>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|line| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = match f.as_slice() {
                [trip, ts, w] => ts.parse().ok().zip(w.parse().ok()).map(|(timestamp, payload)| SensorRecord {
                    trip_id: trip.to_string(),
                    timestamp,
                    payload,
                }),
                _ => None,
            };
            if parsed.is_none() {
                stats.unparseable += 1;
            }
            parsed
        })
        .collect()
}

/// Parses `trip_id,timestamp,board,alight` lines of an APC stream. Lines
/// that do not parse are counted and skipped.
pub fn parse_apc_lines(text: &str, stats: &mut AlignStats) -> Vec<SensorRecord<ApcCounts>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|line| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = match f.as_slice() {
                [trip, ts, b, a] => match (ts.parse(), b.parse(), a.parse()) {
                    (Ok(timestamp), Ok(board), Ok(alight)) => Some(SensorRecord {
                        trip_id: trip.to_string(),
                        timestamp,
                        payload: ApcCounts { board, alight },
                    }),
                    _ => None,
                },
                _ => None,
            };
            if parsed.is_none() {
                stats.unparseable += 1;
            }
            parsed
        })
        .collect()
}
