use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Capacity, Trip};
use crate::projection::{project, residual_rate};
use crate::stats::nearest_rank_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub end_ae: f64,
}

pub fn trip_metrics(estimate: &[f64], truth: &[f64]) -> Result<TripMetrics> {
    if estimate.len() != truth.len() {
        return Err(Error::input(format!("{} estimates for {} truths", estimate.len(), truth.len())));
    }
    if estimate.is_empty() {
        return Err(Error::input("metrics of an empty trip"));
    }
    let n = estimate.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (e, t) in estimate.iter().zip(truth) {
        se += (e - t) * (e - t);
        ae += (e - t).abs();
    }
    let end_ae = (estimate[estimate.len() - 1] - truth[truth.len() - 1]).abs();
    Ok(TripMetrics { rmse: (se / n).sqrt(), mae: ae / n, end_ae })
}

/// Fraction of stops where projecting the raw APC counts, chained from an
/// empty vehicle, needs clipping.
pub fn apc_inconsistency_rate(trip: &Trip, capacity: Capacity) -> Result<f64> {
    let mut l = 0.0;
    let mut residuals = Vec::with_capacity(trip.len());
    for e in &trip.events {
        let p = project(l, f64::from(e.apc_board_raw), f64::from(e.apc_alight_raw), capacity)?;
        l = p.l_phys;
        residuals.push(p.e_phys);
    }
    residual_rate(residuals.into_iter(), trip.len())
}

pub fn tau_from_rates(rates: &[f64], q: f64) -> Result<f64> {
    if rates.is_empty() {
        return Err(Error::input("bad-trip threshold needs at least one training trip"));
    }
    Ok(nearest_rank_quantile(rates, q))
}

pub fn fit_tau_bad(train: &[&Trip], capacity: Capacity, q: f64) -> Result<f64> {
    let rates = train.iter().map(|t| apc_inconsistency_rate(t, capacity)).collect::<Result<Vec<_>>>()?;
    tau_from_rates(&rates, q)
}

pub fn apc_bad_label(trips: &[&Trip], capacity: Capacity, tau_bad: f64) -> Result<Vec<bool>> {
    trips.iter().map(|t| Ok(apc_inconsistency_rate(t, capacity)? > tau_bad)).collect()
}
