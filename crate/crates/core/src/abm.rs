//! Poisson/Binomial generative audit: shrunk rate calibration over
//! (hour, semantic label) cells, Monte Carlo load envelopes, and per-stop
//! W1 scoring of a reconstructed trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{Capacity, Trip};
use crate::rng::{binomial, poisson, stream};
use crate::stats::nearest_rank_sorted;

pub const HOURS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbmParams {
    pub kappa: f64,
    pub n_samples: usize,
    pub shock_w1_threshold: f64,
    pub seed: u64,
}

impl Default for AbmParams {
    fn default() -> Self {
        AbmParams { kappa: 10.0, n_samples: 500, shock_w1_threshold: 10.0, seed: 0 }
    }
}

impl AbmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("kappa {} must be >= 0", self.kappa)));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be >= 1".into()));
        }
        if !(self.shock_w1_threshold >= 0.0) {
            return Err(Error::Config("shock_w1_threshold must be >= 0".into()));
        }
        Ok(())
    }
}

/// Shrunk per-cell rates, stored hour-major: cell `h * labels + s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbmRates {
    pub labels: usize,
    pub kappa: f64,
    pub lambda: Vec<f64>,
    pub p: Vec<f64>,
    pub n_board: Vec<usize>,
    pub n_alight: Vec<usize>,
    pub lambda_global: f64,
    pub p_global: f64,
}

impl AbmRates {
    fn cell(&self, hour: u8, label: usize) -> Result<usize> {
        if usize::from(hour) >= HOURS || label >= self.labels {
            return Err(Error::input(format!("no ABM cell for hour {hour}, label {label}")));
        }
        Ok(usize::from(hour) * self.labels + label)
    }

    pub fn rate(&self, hour: u8, label: usize) -> Result<(f64, f64)> {
        let c = self.cell(hour, label)?;
        Ok((self.lambda[c], self.p[c]))
    }

    /// `(lambda, p)` per stop of a trip, given each stop's semantic label.
    pub fn stop_rates(&self, trip: &Trip, labels: &[usize]) -> Result<Vec<(f64, f64)>> {
        if labels.len() != trip.len() {
            return Err(Error::input("one semantic label per stop required"));
        }
        trip.events.iter().zip(labels).map(|(e, &s)| self.rate(e.hour_bin, s)).collect()
    }
}

/// Fits shrunk rates on training trips. `labels[i][k]` is the semantic
/// label of stop `k` of `trips[i]`; use a single label 0 when semantics are
/// disabled.
pub fn calibrate_rates(trips: &[&Trip], labels: &[Vec<usize>], n_labels: usize, kappa: f64) -> Result<AbmRates> {
    if trips.is_empty() || trips.iter().all(|t| t.is_empty()) {
        return Err(Error::input("ABM calibration needs at least one training stop"));
    }
    if labels.len() != trips.len() || n_labels == 0 {
        return Err(Error::input("one label row per training trip required"));
    }
    let cells = HOURS * n_labels;
    let (mut sb, mut nb) = (vec![0.0; cells], vec![0usize; cells]);
    let (mut sp, mut np) = (vec![0.0; cells], vec![0usize; cells]);
    for (t, row) in trips.iter().zip(labels) {
        if row.len() != t.len() {
            return Err(Error::input(format!("trip {}: label row misaligned", t.trip_id)));
        }
        let mut l_prev = 0u32;
        for (e, &s) in t.events.iter().zip(row) {
            if s >= n_labels {
                return Err(Error::input(format!("label {s} out of range")));
            }
            let c = usize::from(e.hour_bin) * n_labels + s;
            sb[c] += f64::from(e.mc_board);
            nb[c] += 1;
            if l_prev > 0 {
                sp[c] += f64::from(e.mc_alight) / f64::from(l_prev);
                np[c] += 1;
            }
            l_prev = e.mc_load;
        }
    }
    let total_nb: usize = nb.iter().sum();
    let total_np: usize = np.iter().sum();
    let lambda_global = sb.iter().sum::<f64>() / total_nb as f64;
    let p_global = if total_np > 0 { sp.iter().sum::<f64>() / total_np as f64 } else { 0.0 };
    let shrink = |s: f64, n: usize, g: f64| {
        if n == 0 {
            g
        } else {
            (s + kappa * g) / (n as f64 + kappa)
        }
    };
    let lambda = (0..cells).map(|c| shrink(sb[c], nb[c], lambda_global)).collect();
    let p = (0..cells).map(|c| shrink(sp[c], np[c], p_global).clamp(0.0, 1.0)).collect();
    Ok(AbmRates { labels: n_labels, kappa, lambda, p, n_board: nb, n_alight: np, lambda_global, p_global })
}

/// Simulated loads, `paths[s][k]` for path `s` and stop `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    pub paths: Vec<Vec<f64>>,
}

impl SampleMatrix {
    pub fn stop(&self, k: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p[k]).collect()
    }
}

pub fn simulate(rates: &[(f64, f64)], n_samples: usize, seed: u64, capacity: Capacity) -> Result<SampleMatrix> {
    simulate_with(rates, n_samples, seed, capacity, Exec::default())
}

/// Draws `n_samples` independent load paths. Path `s` uses its own stream
/// keyed by `(seed, s)`, so the result does not depend on `exec`.
pub fn simulate_with(
    rates: &[(f64, f64)],
    n_samples: usize,
    seed: u64,
    capacity: Capacity,
    exec: Exec,
) -> Result<SampleMatrix> {
    if n_samples == 0 {
        return Err(Error::input("n_samples must be >= 1"));
    }
    if rates.iter().any(|&(l, p)| !(l >= 0.0 && l.is_finite()) || !(0.0..=1.0).contains(&p)) {
        return Err(Error::input("ABM rates need lambda >= 0 and p in [0, 1]"));
    }
    let cap = capacity.get().floor() as u32;
    let paths = exec.map(n_samples, |s| {
        let mut rng = stream(seed, "abm-path", s as u64);
        let mut load = 0u32;
        rates
            .iter()
            .map(|&(lambda, p)| {
                let a = binomial(&mut rng, load, p);
                let room = cap - (load - a);
                let b = poisson(&mut rng, lambda).min(room);
                load = load - a + b;
                f64::from(load)
            })
            .collect()
    });
    Ok(SampleMatrix { paths })
}

/// W1 between the empirical distribution of `samples` and a point mass.
pub fn w1_point_mass(samples: &[f64], point: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::input("W1 needs at least one sample"));
    }
    Ok(samples.iter().map(|s| (s - point).abs()).sum::<f64>() / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopAudit {
    pub stop_index: usize,
    pub l_final: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub w1: f64,
    pub inside: bool,
    pub shock: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub trip_id: String,
    pub stops: Vec<StopAudit>,
    pub coverage: f64,
}

impl AuditReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["trip_id", "stop_index", "l_final", "abm_mean", "p05", "p95", "w1", "inside", "shock"])
            .map_err(csv_err)?;
        for s in &self.stops {
            out.write_record([
                self.trip_id.clone(),
                s.stop_index.to_string(),
                s.l_final.to_string(),
                s.mean.to_string(),
                s.lower.to_string(),
                s.upper.to_string(),
                s.w1.to_string(),
                u8::from(s.inside).to_string(),
                u8::from(s.shock).to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Scores `l_final` against the simulated envelope. Bounds are the 5th and
/// 95th nearest-rank percentiles; a stop counts as covered when it lies
/// inside them, inclusive.
pub fn audit(
    trip_id: &str,
    l_final: &[f64],
    rates: &[(f64, f64)],
    params: &AbmParams,
    capacity: Capacity,
    exec: Exec,
) -> Result<AuditReport> {
    if l_final.len() != rates.len() {
        return Err(Error::input("one rate pair per stop required"));
    }
    params.validate()?;
    let m = simulate_with(rates, params.n_samples, params.seed, capacity, exec)?;
    let mut stops = Vec::with_capacity(l_final.len());
    for (k, &l) in l_final.iter().enumerate() {
        let mut col = m.stop(k);
        col.sort_by(f64::total_cmp);
        let lower = nearest_rank_sorted(&col, 0.05);
        let upper = nearest_rank_sorted(&col, 0.95);
        let w1 = w1_point_mass(&col, l)?;
        let inside = (lower..=upper).contains(&l);
        stops.push(StopAudit {
            stop_index: k,
            l_final: l,
            mean: col.iter().sum::<f64>() / col.len() as f64,
            lower,
            upper,
            w1,
            inside,
            shock: !inside && w1 > params.shock_w1_threshold,
        });
    }
    let coverage = if stops.is_empty() { 1.0 } else { stops.iter().filter(|s| s.inside).count() as f64 / stops.len() as f64 };
    Ok(AuditReport { trip_id: trip_id.to_string(), stops, coverage })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StopEvent;

    fn trip(hours: &[u8], flows: &[(u32, u32)]) -> Trip {
        let mut load = 0u32;
        let events = hours
            .iter()
            .zip(flows)
            .enumerate()
            .map(|(k, (&h, &(b, a)))| {
                load = load - a + b;
                StopEvent {
                    trip_id: "t".into(),
                    stop_index: k,
                    stop_id: format!("s{k}"),
                    timestamp: i64::from(h) * 3600 + k as i64,
                    hour_bin: h,
                    apc_board_raw: b,
                    apc_alight_raw: a,
                    mc_board: b,
                    mc_alight: a,
                    mc_load: load,
                    wifi_count: None,
                    wifi_valid: false,
                    weather: None,
                    occupancy_prior: None,
                    poi_density: vec![],
                }
            })
            .collect();
        Trip { trip_id: "t".into(), events }
    }

    #[test]
    fn shrinkage_arithmetic() {
        // Ten stops at hour 8 with 6 boardings, ten at hour 9 with none:
        // global mean 3; cell 8 -> (60 + 10*3)/20 = 4.5.
        let mut hours = vec![8u8; 10];
        hours.extend([9u8; 10]);
        let mut flows = vec![(6, 0); 10];
        flows.extend([(0, 0); 10]);
        let t = trip(&hours, &flows);
        let r = calibrate_rates(&[&t], &[vec![0; 20]], 1, 10.0).unwrap();
        assert_eq!(r.lambda_global, 3.0);
        assert_eq!(r.rate(8, 0).unwrap().0, 4.5);
        assert_eq!(r.rate(3, 0).unwrap(), (r.lambda_global, r.p_global));
        let r0 = calibrate_rates(&[&t], &[vec![0; 20]], 1, 0.0).unwrap();
        assert_eq!(r0.rate(8, 0).unwrap().0, 6.0);
        let big = calibrate_rates(&[&t], &[vec![0; 20]], 1, 1e12).unwrap();
        assert!((big.rate(8, 0).unwrap().0 - 3.0).abs() < 1e-9);
    }

    #[test]
    fn alight_rate_uses_occupied_stops_only() {
        let t = trip(&[7, 7, 7], &[(4, 0), (0, 2), (0, 1)]);
        let r = calibrate_rates(&[&t], &[vec![0; 3]], 1, 0.0).unwrap();
        assert_eq!(r.n_alight[7], 2);
        assert_eq!(r.rate(7, 0).unwrap().1, (0.5 + 0.5) / 2.0);
    }

    #[test]
    fn empty_training_rejected() {
        assert!(calibrate_rates(&[], &[], 1, 10.0).is_err());
    }

    #[test]
    fn zero_arrivals_stay_empty() {
        let m = simulate(&[(0.0, 0.3); 6], 50, 1, Capacity::DEFAULT).unwrap();
        assert!(m.paths.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn full_alighting_empties_bus() {
        let rates = [(12.0, 1.0), (0.0, 1.0), (0.0, 1.0)];
        let m = simulate(&rates, 100, 3, Capacity::DEFAULT).unwrap();
        assert!(m.paths.iter().all(|p| p[1] == 0.0 && p[2] == 0.0));
    }

    #[test]
    fn paths_feasible_and_policy_invariant() {
        let rates = [(40.0, 0.05); 10];
        let c = Capacity::new(50.0).unwrap();
        let a = simulate_with(&rates, 64, 9, c, Exec::Sequential).unwrap();
        let b = simulate_with(&rates, 64, 9, c, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(a.paths.iter().flatten().all(|v| (0.0..=50.0).contains(v)));
    }

    #[test]
    fn mean_matches_recursion() {
        let rates = [(3.0, 0.0), (5.0, 0.2), (1.5, 0.5), (8.0, 0.1), (0.5, 0.9), (45.0, 0.3)];
        let n = 10_000;
        let m = simulate(&rates, n, 17, Capacity::new(1e6).unwrap()).unwrap();
        let mut mk = 0.0;
        for (k, &(lambda, p)) in rates.iter().enumerate() {
            mk = mk * (1.0 - p) + lambda;
            let col = m.stop(k);
            let mean = col.iter().sum::<f64>() / n as f64;
            let se = crate::stats::std_ddof1(&col) / (n as f64).sqrt();
            assert!((mean - mk).abs() <= 3.0 * se.max(1e-9), "stop {k}: {mean} vs {mk} (se {se})");
        }
    }

    #[test]
    fn w1_examples() {
        assert_eq!(w1_point_mass(&[4.0, 6.0], 5.0).unwrap(), 1.0);
        assert_eq!(w1_point_mass(&[3.0, 3.0], 3.0).unwrap(), 0.0);
        assert_eq!(w1_point_mass(&[0.0, 10.0, 20.0], 0.0).unwrap(), 10.0);
        assert!(w1_point_mass(&[], 0.0).is_err());
    }

    #[test]
    fn far_trajectory_is_flagged_everywhere() {
        let rates = [(2.0, 0.2); 5];
        let p = AbmParams { n_samples: 200, ..Default::default() };
        let r = audit("t", &[79.0; 5], &rates, &p, Capacity::DEFAULT, Exec::Sequential).unwrap();
        assert_eq!(r.coverage, 0.0);
        assert!(r.stops.iter().all(|s| s.shock && s.w1 >= 0.0));
    }

    #[test]
    fn single_sample_envelope() {
        let rates = [(4.0, 0.2); 4];
        let p = AbmParams { n_samples: 1, seed: 5, ..Default::default() };
        let path = simulate(&rates, 1, 5, Capacity::DEFAULT).unwrap().paths[0].clone();
        let r = audit("t", &path, &rates, &p, Capacity::DEFAULT, Exec::Sequential).unwrap();
        assert!(r.stops.iter().all(|s| s.lower == s.upper && s.w1 == 0.0));
        assert_eq!(r.coverage, 1.0);
    }
}
