//! Line-record corpus files.
//!
//! ```text
//! #paxload-corpus v1
//! trip_id,stop_index,stop_id,timestamp,hour_bin,apc_board_raw,apc_alight_raw,mc_board,mc_alight,mc_load,wifi_count,wifi_valid,weather,occupancy_prior,poi_density
//! T0000,0,S012,1709537412,7,4,0,4,0,4,3,1,8.5;0,,1.2;0.4;9.8;1.1;1;1.3
//! ```
//!
//! One record per stop event in `StopEvent` field order. Optional fields are
//! empty when absent; vector fields are `;`-separated. Records of a trip are
//! contiguous and ordered by stop index.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::ingest::poi::parse_vec;
use crate::model::{StopEvent, Trip};

pub const SCHEMA_VERSION: u32 = 1;
pub const HEADER_PREFIX: &str = "#paxload-corpus v";
pub const COLUMNS: [&str; 15] = [
    "trip_id",
    "stop_index",
    "stop_id",
    "timestamp",
    "hour_bin",
    "apc_board_raw",
    "apc_alight_raw",
    "mc_board",
    "mc_alight",
    "mc_load",
    "wifi_count",
    "wifi_valid",
    "weather",
    "occupancy_prior",
    "poi_density",
];

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn write_corpus<W: Write>(mut w: W, trips: &[Trip]) -> Result<()> {
    writeln!(w, "{HEADER_PREFIX}{SCHEMA_VERSION}")?;
    writeln!(w, "{}", COLUMNS.join(","))?;
    for e in trips.iter().flat_map(|t| &t.events) {
        if e.trip_id.contains([',', '\n']) || e.stop_id.contains([',', '\n']) {
            return Err(Error::input(format!("identifier {:?} contains a separator", e.trip_id)));
        }
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            e.trip_id,
            e.stop_index,
            e.stop_id,
            e.timestamp,
            e.hour_bin,
            e.apc_board_raw,
            e.apc_alight_raw,
            e.mc_board,
            e.mc_alight,
            e.mc_load,
            e.wifi_count.map(|c| c.to_string()).unwrap_or_default(),
            u8::from(e.wifi_valid),
            e.weather.as_deref().map(join).unwrap_or_default(),
            e.occupancy_prior.map(|o| o.to_string()).unwrap_or_default(),
            join(&e.poi_density),
        )?;
    }
    w.flush()?;
    Ok(())
}

fn parse_record(line: &str) -> std::result::Result<StopEvent, String> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != COLUMNS.len() {
        return Err(format!("expected {} fields, found {}", COLUMNS.len(), f.len()));
    }
    fn num<T: std::str::FromStr>(name: &str, s: &str) -> std::result::Result<T, String> {
        s.parse().map_err(|_| format!("{name}: cannot parse {s:?}"))
    }
    fn opt<T: std::str::FromStr>(name: &str, s: &str) -> std::result::Result<Option<T>, String> {
        if s.is_empty() { Ok(None) } else { num(name, s).map(Some) }
    }
    let wifi_count: Option<u32> = opt("wifi_count", f[10])?;
    let wifi_valid = match f[11] {
        "0" => false,
        "1" => true,
        other => return Err(format!("wifi_valid: expected 0 or 1, got {other:?}")),
    };
    if wifi_valid && wifi_count.is_none() {
        return Err("wifi_valid=1 without wifi_count".into());
    }
    let hour_bin: u8 = num("hour_bin", f[4])?;
    if hour_bin > 23 {
        return Err(format!("hour_bin {hour_bin} outside [0, 23]"));
    }
    let occupancy_prior: Option<f64> = opt("occupancy_prior", f[13])?;
    if occupancy_prior.is_some_and(|o| !(o >= 0.0)) {
        return Err("occupancy_prior must be >= 0".into());
    }
    let weather = if f[12].is_empty() { None } else { Some(parse_vec(f[12])?) };
    let poi_density = parse_vec(f[14])?;
    if poi_density.iter().any(|d| !(*d >= 0.0)) {
        return Err("poi_density entries must be >= 0".into());
    }
    if f[0].is_empty() {
        return Err("empty trip_id".into());
    }
    Ok(StopEvent {
        trip_id: f[0].to_string(),
        stop_index: num("stop_index", f[1])?,
        stop_id: f[2].to_string(),
        timestamp: num("timestamp", f[3])?,
        hour_bin,
        apc_board_raw: num("apc_board_raw", f[5])?,
        apc_alight_raw: num("apc_alight_raw", f[6])?,
        mc_board: num("mc_board", f[7])?,
        mc_alight: num("mc_alight", f[8])?,
        mc_load: num("mc_load", f[9])?,
        wifi_count,
        wifi_valid,
        weather,
        occupancy_prior,
        poi_density,
    })
}

/// Reads a corpus file. Errors carry the 1-based line number.
pub fn read_corpus<R: BufRead>(r: R, path: &str) -> Result<Vec<Trip>> {
    let err = |line: usize, message: String| Error::Parse { path: path.to_string(), line, message };
    let mut lines = r.lines();
    let header = lines.next().transpose()?.ok_or_else(|| err(1, "empty file".into()))?;
    let version = header
        .strip_prefix(HEADER_PREFIX)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| err(1, format!("missing schema header {HEADER_PREFIX}N")))?;
    if version != SCHEMA_VERSION {
        return Err(err(1, format!("unsupported schema version {version}")));
    }
    let columns = lines.next().transpose()?.ok_or_else(|| err(2, "missing column header".into()))?;
    if columns.trim_end() != COLUMNS.join(",") {
        return Err(err(2, "unexpected column header".into()));
    }

    let mut trips: Vec<Trip> = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 3;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = parse_record(line.trim_end()).map_err(|m| err(n, m))?;
        match trips.last_mut() {
            Some(t) if t.trip_id == e.trip_id => {
                if e.stop_index != t.events.len() {
                    return Err(err(n, format!("trip {}: expected stop_index {}, found {}", e.trip_id, t.events.len(), e.stop_index)));
                }
                t.events.push(e);
            }
            _ => {
                if trips.iter().any(|t| t.trip_id == e.trip_id) {
                    return Err(err(n, format!("trip {} is not contiguous", e.trip_id)));
                }
                if e.stop_index != 0 {
                    return Err(err(n, format!("trip {} starts at stop_index {}", e.trip_id, e.stop_index)));
                }
                trips.push(Trip { trip_id: e.trip_id.clone(), events: vec![e] });
            }
        }
    }
    Ok(trips)
}
