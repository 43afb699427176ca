//! Synthetic transit corpora with known ground truth.
//!
//! Ground truth follows a Poisson/Binomial process with alight-then-board
//! capacity feasibility. The APC stream is the truth corrupted by
//! per-passenger miscounts, additive boarding spikes and a trip-level
//! cold start that drops the first few stops' boardings. Wi-Fi device
//! counts follow an hour-varying persons-per-device ratio with
//! multiplicative lognormal noise and occasional outliers.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ingest::PoiTable;
use crate::model::{Capacity, StopEvent, Trip};
use crate::rng::{self, StreamRng};

/// Radius whose densities are copied into each stop event.
pub const DEFAULT_POI_RADIUS: u32 = 300;
pub const POI_RADII: [u32; 3] = [200, 300, 400];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApcNoise {
    /// Probability that a passenger goes uncounted.
    pub miss_prob: f64,
    /// Probability that a passenger is counted twice.
    pub dup_prob: f64,
    /// Probability of an additive boarding spike at a stop.
    pub spike_prob: f64,
    pub spike_min: u32,
    pub spike_max: u32,
    /// Probability that a trip starts with the counter offline.
    pub cold_start_prob: f64,
    /// Range of initial stops whose boardings are lost on a cold start.
    pub cold_start_stops_min: usize,
    pub cold_start_stops_max: usize,
    /// Standard deviation of a per-trip, per-direction counter bias. A
    /// negative draw adds to the miss probability, a positive one to the
    /// duplicate probability, for every passenger of that trip.
    pub door_bias_sd: f64,
}

impl Default for ApcNoise {
    fn default() -> Self {
        ApcNoise {
            miss_prob: 0.06,
            dup_prob: 0.03,
            spike_prob: 0.03,
            spike_min: 15,
            spike_max: 40,
            cold_start_prob: 0.15,
            cold_start_stops_min: 2,
            cold_start_stops_max: 5,
            door_bias_sd: 0.15,
        }
    }
}

impl ApcNoise {
    pub fn none() -> Self {
        ApcNoise {
            miss_prob: 0.0,
            dup_prob: 0.0,
            spike_prob: 0.0,
            cold_start_prob: 0.0,
            door_bias_sd: 0.0,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WifiNoise {
    pub missing_prob: f64,
    /// Lognormal sigma of the multiplicative device-count noise.
    pub sigma: f64,
    /// Probability that a device count is replaced by an outlier.
    pub outlier_prob: f64,
    /// Outlier multiplier range; low and high multipliers are equally likely.
    pub outlier_low: [f64; 2],
    pub outlier_high: [f64; 2],
}

impl Default for WifiNoise {
    fn default() -> Self {
        WifiNoise {
            missing_prob: 0.2,
            sigma: 0.15,
            outlier_prob: 0.05,
            outlier_low: [0.1, 0.4],
            outlier_high: [2.0, 3.5],
        }
    }
}

impl WifiNoise {
    pub fn none() -> Self {
        WifiNoise { missing_prob: 0.0, sigma: 0.0, outlier_prob: 0.0, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_trips: usize,
    /// Inclusive range of stops per trip.
    pub stops_per_trip: [usize; 2],
    pub capacity: f64,
    pub n_routes: usize,
    pub n_stops: usize,
    /// Per-hour demand multipliers.
    pub hour_profile: Vec<f64>,
    /// Mean boardings per stop before multipliers.
    pub base_boarding: f64,
    pub stop_type_count: usize,
    /// Per-archetype boarding multiplier; length `stop_type_count`.
    pub archetype_board_factor: Vec<f64>,
    /// Per-archetype alighting probability; length `stop_type_count`.
    pub archetype_alight_prob: Vec<f64>,
    pub poi_categories: usize,
    /// True persons-per-device ratio for each hour.
    pub device_ratio_per_hour: Vec<f64>,
    pub apc: ApcNoise,
    pub wifi: WifiNoise,
    pub weather_missing_prob: f64,
    /// First service day, days since epoch.
    pub start_day: i64,
    pub n_days: i64,
    /// Inclusive range of trip start hours.
    pub service_hours: [u8; 2],
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let hour_profile = vec![
            0.3, 0.3, 0.3, 0.3, 0.3, 0.4, 0.8, 1.6, 1.8, 1.2, 0.9, 0.9, //
            1.0, 1.0, 0.9, 1.2, 1.5, 1.8, 1.5, 1.0, 0.7, 0.6, 0.4, 0.3,
        ];
        let device_ratio_per_hour = (0..24)
            .map(|h| {
                let phase = std::f64::consts::TAU * (h as f64 - 14.0) / 24.0;
                ((1.1 + 0.35 * phase.cos()) * 100.0).round() / 100.0
            })
            .collect();
        SynthConfig {
            n_trips: 200,
            stops_per_trip: [17, 33],
            capacity: 80.0,
            n_routes: 8,
            n_stops: 64,
            hour_profile,
            base_boarding: 3.0,
            stop_type_count: 4,
            archetype_board_factor: vec![0.7, 1.0, 1.4, 1.9],
            archetype_alight_prob: vec![0.30, 0.18, 0.22, 0.26],
            poi_categories: 6,
            device_ratio_per_hour,
            apc: ApcNoise::default(),
            wifi: WifiNoise::default(),
            weather_missing_prob: 0.0,
            start_day: 19_786, // 2024-03-04, a Monday
            n_days: 28,
            service_hours: [6, 21],
            seed: 7,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {p} is not a probability")))
    }
}

impl SynthConfig {
    /// Noise-free corpus: APC equals truth and anchors are exact up to
    /// device-count rounding.
    pub fn noiseless() -> Self {
        SynthConfig { apc: ApcNoise::none(), wifi: WifiNoise::none(), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n_trips == 0 {
            return cfg("n_trips must be > 0".into());
        }
        let [lo, hi] = self.stops_per_trip;
        if lo == 0 || lo > hi {
            return cfg(format!("stops_per_trip range [{lo}, {hi}] is invalid"));
        }
        Capacity::new(self.capacity)?;
        if self.n_routes == 0 || self.n_stops == 0 {
            return cfg("n_routes and n_stops must be > 0".into());
        }
        if self.hour_profile.len() != 24 || self.hour_profile.iter().any(|&m| !(m > 0.0)) {
            return cfg("hour_profile needs 24 positive multipliers".into());
        }
        if !(self.base_boarding >= 0.0) {
            return cfg("base_boarding must be >= 0".into());
        }
        if self.stop_type_count < 2 {
            return cfg("stop_type_count must be >= 2".into());
        }
        if self.archetype_board_factor.len() != self.stop_type_count
            || self.archetype_alight_prob.len() != self.stop_type_count
        {
            return cfg("archetype vectors must have stop_type_count entries".into());
        }
        if self.archetype_board_factor.iter().any(|&f| !(f >= 0.0)) {
            return cfg("archetype_board_factor must be >= 0".into());
        }
        for &p in &self.archetype_alight_prob {
            check_prob("archetype_alight_prob", p)?;
        }
        if self.poi_categories == 0 {
            return cfg("poi_categories must be > 0".into());
        }
        if self.device_ratio_per_hour.len() != 24
            || self.device_ratio_per_hour.iter().any(|r| !(0.1..=5.0).contains(r))
        {
            return cfg("device_ratio_per_hour needs 24 ratios in [0.1, 5.0]".into());
        }
        let a = &self.apc;
        check_prob("apc.miss_prob", a.miss_prob)?;
        check_prob("apc.dup_prob", a.dup_prob)?;
        if a.miss_prob + a.dup_prob > 1.0 {
            return cfg("apc.miss_prob + apc.dup_prob exceeds 1".into());
        }
        check_prob("apc.spike_prob", a.spike_prob)?;
        check_prob("apc.cold_start_prob", a.cold_start_prob)?;
        if !(a.door_bias_sd >= 0.0 && a.door_bias_sd <= 1.0) {
            return cfg("apc.door_bias_sd must be within [0, 1]".into());
        }
        if a.spike_min > a.spike_max || a.cold_start_stops_min > a.cold_start_stops_max {
            return cfg("apc ranges must have min <= max".into());
        }
        let w = &self.wifi;
        check_prob("wifi.missing_prob", w.missing_prob)?;
        check_prob("wifi.outlier_prob", w.outlier_prob)?;
        if !(w.sigma >= 0.0) {
            return cfg("wifi.sigma must be >= 0".into());
        }
        for r in [w.outlier_low, w.outlier_high] {
            if !(r[0] >= 0.0 && r[0] <= r[1]) {
                return cfg("wifi outlier ranges must satisfy 0 <= lo <= hi".into());
            }
        }
        check_prob("weather_missing_prob", self.weather_missing_prob)?;
        if self.n_days <= 0 {
            return cfg("n_days must be > 0".into());
        }
        let [h0, h1] = self.service_hours;
        if h0 > h1 || h1 > 23 {
            return cfg("service_hours must be an ordered pair within [0, 23]".into());
        }
        Ok(())
    }
}

/// Generator output: the corpus plus the latent facts that tests and
/// diagnostics compare against.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub trips: Vec<Trip>,
    pub poi: PoiTable,
    /// Latent archetype of each physical stop.
    pub stop_archetype: BTreeMap<String, usize>,
    /// Trips whose APC started cold.
    pub cold_start_trips: Vec<String>,
    pub device_ratio: Vec<f64>,
}

struct Network {
    stop_ids: Vec<String>,
    archetype: Vec<usize>,
    /// Per stop, per radius index, POI densities.
    poi: Vec<Vec<Vec<f64>>>,
    routes: Vec<Vec<usize>>,
}

fn build_network(cfg: &SynthConfig) -> Network {
    let mut rng = rng::stream(cfg.seed, "network", 0);
    let k = cfg.stop_type_count;
    let cats = cfg.poi_categories;
    // Archetype POI profiles: a dominant and a secondary category each.
    let profiles: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            (0..cats)
                .map(|c| {
                    let mut m = 1.0;
                    if c == j % cats {
                        m += 8.0;
                    }
                    if c == (j / cats + j + 1) % cats {
                        m += 3.0;
                    }
                    m
                })
                .collect()
        })
        .collect();
    let mut stop_ids = Vec::with_capacity(cfg.n_stops);
    let mut archetype = Vec::with_capacity(cfg.n_stops);
    let mut poi = Vec::with_capacity(cfg.n_stops);
    for s in 0..cfg.n_stops {
        stop_ids.push(format!("S{s:03}"));
        let a = s % k;
        archetype.push(a);
        let base: Vec<f64> = profiles[a]
            .iter()
            .map(|&m| m * (0.2 * rng::standard_normal(&mut rng)).exp())
            .collect();
        let per_radius = POI_RADII
            .iter()
            .map(|&r| {
                let area = (f64::from(r) / f64::from(DEFAULT_POI_RADIUS)).powi(2);
                base.iter()
                    .map(|&d| {
                        let v = d * area * (0.1 * rng::standard_normal(&mut rng)).exp();
                        (v * 1000.0).round() / 1000.0
                    })
                    .collect()
            })
            .collect();
        poi.push(per_radius);
    }
    let route_len = cfg.stops_per_trip[1];
    let routes = (0..cfg.n_routes)
        .map(|_| (0..route_len).map(|_| rng.random_range(0..cfg.n_stops)).collect())
        .collect();
    Network { stop_ids, archetype, poi, routes }
}

fn weather_at(cfg: &SynthConfig, day: i64, hour: u8) -> Vec<f64> {
    let mut rng = rng::stream(cfg.seed, "weather", (day * 24 + i64::from(hour)) as u64);
    let seasonal = 12.0 + 4.0 * ((day % 365) as f64 / 58.0).sin();
    let diurnal = 5.0 * (std::f64::consts::TAU * (f64::from(hour) - 15.0) / 24.0).cos();
    let temp = seasonal + diurnal + 2.0 * rng::standard_normal(&mut rng);
    let precip = if rng.random::<f64>() < 0.2 { 1.0 } else { 0.0 };
    vec![(temp * 10.0).round() / 10.0, precip]
}

fn weighted_hour(cfg: &SynthConfig, rng: &mut StreamRng) -> u8 {
    let [h0, h1] = cfg.service_hours;
    let total: f64 = (h0..=h1).map(|h| cfg.hour_profile[h as usize]).sum();
    let mut u = rng.random::<f64>() * total;
    for h in h0..=h1 {
        u -= cfg.hour_profile[h as usize];
        if u <= 0.0 {
            return h;
        }
    }
    h1
}

/// Counts `n` true passengers through a noisy counter.
fn miscount(rng: &mut StreamRng, n: u32, miss: f64, dup: f64) -> u32 {
    if miss == 0.0 && dup == 0.0 {
        return n;
    }
    let mut c = 0;
    for _ in 0..n {
        let u: f64 = rng.random();
        if u < miss {
            continue;
        }
        c += if u < miss + dup { 2 } else { 1 };
    }
    c
}

fn generate_trip(cfg: &SynthConfig, net: &Network, index: usize) -> (Trip, bool) {
    let mut rng = rng::stream(cfg.seed, "trip", index as u64);
    let capacity = cfg.capacity.floor() as u32;
    let trip_id = format!("T{index:04}");
    let route = &net.routes[rng.random_range(0..net.routes.len())];
    let n = rng.random_range(cfg.stops_per_trip[0]..=cfg.stops_per_trip[1]);
    let day = cfg.start_day + rng.random_range(0..cfg.n_days);
    let hour = weighted_hour(cfg, &mut rng);
    let mut ts = day * 86_400 + i64::from(hour) * 3_600 + rng.random_range(0..3_600);

    let cold_start = rng.random::<f64>() < cfg.apc.cold_start_prob;
    let cold_stops = if cold_start {
        rng.random_range(cfg.apc.cold_start_stops_min..=cfg.apc.cold_start_stops_max)
    } else {
        0
    };

    let door = |rng: &mut StreamRng| {
        let g = (cfg.apc.door_bias_sd * rng::standard_normal(rng)).clamp(-0.5, 0.5);
        let miss = (cfg.apc.miss_prob + (-g).max(0.0)).min(1.0);
        (miss, (cfg.apc.dup_prob + g.max(0.0)).min(1.0 - miss))
    };
    let (board_rates, alight_rates) = if cfg.apc.door_bias_sd > 0.0 {
        (door(&mut rng), door(&mut rng))
    } else {
        ((cfg.apc.miss_prob, cfg.apc.dup_prob), (cfg.apc.miss_prob, cfg.apc.dup_prob))
    };

    let mut events = Vec::with_capacity(n);
    let mut load: u32 = 0;
    for k in 0..n {
        if k > 0 {
            ts += rng.random_range(60..=150);
        }
        let h = StopEvent::hour_of(ts);
        let stop = route[k];
        let arch = net.archetype[stop];
        let weather = weather_at(cfg, ts.div_euclid(86_400), h);
        let rain_boost = if weather[1] > 0.0 { 1.1 } else { 1.0 };

        let alight = rng::binomial(&mut rng, load, cfg.archetype_alight_prob[arch]);
        let lambda = cfg.base_boarding
            * cfg.hour_profile[h as usize]
            * cfg.archetype_board_factor[arch]
            * rain_boost;
        let room = capacity - (load - alight);
        let board = rng::poisson(&mut rng, lambda).min(room);
        load = load - alight + board;

        let a = &cfg.apc;
        let mut apc_board = miscount(&mut rng, board, board_rates.0, board_rates.1);
        let apc_alight = miscount(&mut rng, alight, alight_rates.0, alight_rates.1);
        if rng.random::<f64>() < a.spike_prob {
            apc_board += rng.random_range(a.spike_min..=a.spike_max);
        }
        if k < cold_stops {
            apc_board = 0;
        }

        let w = &cfg.wifi;
        let wifi_count = if rng.random::<f64>() < w.missing_prob {
            None
        } else {
            let ratio = cfg.device_ratio_per_hour[h as usize];
            let mut devices = f64::from(load) / ratio;
            if w.sigma > 0.0 {
                devices *= (w.sigma * rng::standard_normal(&mut rng)).exp();
            }
            if rng.random::<f64>() < w.outlier_prob {
                let range = if rng.random::<bool>() { w.outlier_low } else { w.outlier_high };
                devices *= rng.random_range(range[0]..=range[1]);
            }
            Some(devices.round().max(0.0) as u32)
        };
        let weather = if rng.random::<f64>() < cfg.weather_missing_prob { None } else { Some(weather) };

        events.push(StopEvent {
            trip_id: trip_id.clone(),
            stop_index: k,
            stop_id: net.stop_ids[stop].clone(),
            timestamp: ts,
            hour_bin: h,
            apc_board_raw: apc_board,
            apc_alight_raw: apc_alight,
            mc_board: board,
            mc_alight: alight,
            mc_load: load,
            wifi_valid: wifi_count.is_some(),
            wifi_count,
            weather,
            occupancy_prior: None,
            poi_density: net.poi[stop][1].clone(),
        });
    }
    (Trip { trip_id, events }, cold_start)
}

pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    generate_corpus_with(cfg, Exec::default())
}

/// Generates a corpus. Each trip draws from its own `(seed, index)` stream,
/// so the output is identical under any execution policy.
pub fn generate_corpus_with(cfg: &SynthConfig, exec: Exec) -> Result<SynthCorpus> {
    cfg.validate()?;
    let net = build_network(cfg);
    let generated = exec.map(cfg.n_trips, |i| generate_trip(cfg, &net, i));

    let mut poi = PoiTable::default();
    let mut stop_archetype = BTreeMap::new();
    for (s, id) in net.stop_ids.iter().enumerate() {
        stop_archetype.insert(id.clone(), net.archetype[s]);
        for (r, &radius) in POI_RADII.iter().enumerate() {
            poi.insert(id.clone(), radius, net.poi[s][r].clone());
        }
    }
    let cold_start_trips = generated
        .iter()
        .filter(|(_, cold)| *cold)
        .map(|(t, _)| t.trip_id.clone())
        .collect();
    Ok(SynthCorpus {
        trips: generated.into_iter().map(|(t, _)| t).collect(),
        poi,
        stop_archetype,
        cold_start_trips,
        device_ratio: cfg.device_ratio_per_hour.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripSummary {
    pub trip_id: String,
    pub stops: usize,
    pub max_load: u32,
    pub final_load: u32,
}

/// Audits ground-truth conservation and capacity for every trip.
pub fn label_ground_truth_consistency(trips: &[Trip], capacity: Capacity) -> Result<Vec<TripSummary>> {
    trips
        .iter()
        .map(|t| {
            t.validate_structure()?;
            t.check_conservation(capacity)?;
            Ok(TripSummary {
                trip_id: t.trip_id.clone(),
                stops: t.len(),
                max_load: t.events.iter().map(|e| e.mc_load).max().unwrap_or(0),
                final_load: t.events.last().map_or(0, |e| e.mc_load),
            })
        })
        .collect()
}
