//! Semantic stop labels from K-Means over standardized POI densities.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PoiTable;
use crate::model::Trip;
use crate::rng;

pub const MAX_ITER: usize = 300;
pub const REL_TOL: f64 = 1e-4;

/// Fitted K-Means clusterer over standardized POI density vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticClusterer {
    /// Buffer radius the POI densities were computed with, metres.
    pub radius: u32,
    /// Number of clusters requested by the caller.
    pub requested_k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub iterations: usize,
    pub inertia: f64,
}

impl SemanticClusterer {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.feature_mean.len()
    }

    /// Whether K had to be reduced because there were too few distinct
    /// POI vectors.
    pub fn was_reduced(&self) -> bool {
        self.k() < self.requested_k
    }

    fn standardize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    /// Nearest-centroid label; ties resolve to the lowest index.
    pub fn assign(&self, poi: &[f64]) -> Result<usize> {
        if poi.len() != self.dim() {
            return Err(Error::input(format!(
                "POI vector has {} entries, clusterer expects {}",
                poi.len(),
                self.dim()
            )));
        }
        Ok(nearest(&self.centroids, &self.standardize(poi)).0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Distinct stops of the given trips with their POI vectors, keyed by
/// stop id. Densities come from `table` at `radius` when present, else from
/// the events themselves.
pub fn stop_poi_vectors(trips: &[&Trip], table: Option<&PoiTable>, radius: u32) -> BTreeMap<String, Vec<f64>> {
    let mut out = BTreeMap::new();
    for e in trips.iter().flat_map(|t| &t.events) {
        out.entry(e.stop_id.clone()).or_insert_with(|| poi_for(e, table, radius).to_vec());
    }
    out
}

pub(crate) fn poi_for<'a>(e: &'a crate::model::StopEvent, table: Option<&'a PoiTable>, radius: u32) -> &'a [f64] {
    table
        .and_then(|t| t.get(&e.stop_id, radius))
        .unwrap_or(&e.poi_density)
}

/// Fits K-Means (k-means++ seeding, Lloyd iterations) on the POI vectors of
/// the distinct training stops.
pub fn fit_semantics(stops: &BTreeMap<String, Vec<f64>>, k: usize, radius: u32, seed: u64) -> Result<SemanticClusterer> {
    if k == 0 {
        return Err(Error::Config("semantic cluster count must be > 0".into()));
    }
    let raw: Vec<&Vec<f64>> = stops.values().collect();
    if raw.is_empty() {
        return Err(Error::input("no stops with POI vectors"));
    }
    let dim = raw[0].len();
    if dim == 0 || raw.iter().any(|v| v.len() != dim) {
        return Err(Error::input("POI vectors must be non-empty and of equal length"));
    }

    let n = raw.len() as f64;
    let feature_mean: Vec<f64> = (0..dim).map(|j| raw.iter().map(|v| v[j]).sum::<f64>() / n).collect();
    let feature_scale: Vec<f64> = (0..dim)
        .map(|j| {
            let var = raw.iter().map(|v| (v[j] - feature_mean[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 { var.sqrt() } else { 1.0 }
        })
        .collect();
    let points: Vec<Vec<f64>> = raw
        .iter()
        .map(|v| v.iter().zip(feature_mean.iter().zip(&feature_scale)).map(|(x, (m, s))| (x - m) / s).collect())
        .collect();

    let mut distinct: Vec<&Vec<f64>> = points.iter().collect();
    distinct.sort_by(|a, b| a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    let k_eff = k.min(distinct.len());

    let mut rng = rng::stream(seed, "kmeans", u64::from(radius));
    let mut centroids = plus_plus_init(&points, k_eff, &mut rng);
    let mut labels = vec![0usize; points.len()];
    let mut prev_inertia = f64::INFINITY;
    let mut inertia = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..MAX_ITER {
        iterations = it + 1;
        inertia = 0.0;
        for (p, label) in points.iter().zip(labels.iter_mut()) {
            let (i, d) = nearest(&centroids, p);
            *label = i;
            inertia += d;
        }
        let mut sums = vec![vec![0.0; dim]; k_eff];
        let mut counts = vec![0usize; k_eff];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k_eff {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let converged = prev_inertia.is_finite() && (prev_inertia - inertia).abs() <= REL_TOL * prev_inertia.max(f64::MIN_POSITIVE);
        if converged || inertia == 0.0 {
            break;
        }
        prev_inertia = inertia;
    }

    Ok(SemanticClusterer {
        radius,
        requested_k: k,
        centroids,
        feature_mean,
        feature_scale,
        iterations,
        inertia,
    })
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut rng::StreamRng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}
