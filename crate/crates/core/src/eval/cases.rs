use std::str::FromStr;

use crate::error::Error;
use crate::eval::{TripRecord, Variant};

/// Objective used to pick held-out trips for inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseCriterion {
    Rmse,
    CumEphys,
    GatingFreq,
}

impl CaseCriterion {
    pub fn score(self, r: &TripRecord) -> f64 {
        match self {
            CaseCriterion::Rmse => r.rmse,
            CaseCriterion::CumEphys => r.cum_ephys,
            CaseCriterion::GatingFreq => r.gating_freq,
        }
    }
}

impl FromStr for CaseCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "rmse" => Ok(CaseCriterion::Rmse),
            "cum_ephys" => Ok(CaseCriterion::CumEphys),
            "gating_freq" => Ok(CaseCriterion::GatingFreq),
            _ => Err(Error::Config(format!("unknown case criterion {s:?} (rmse, cum_ephys, gating_freq)"))),
        }
    }
}

/// Top `n` records of `variant` by descending score. Ties keep trip id,
/// then seed and fold order.
pub fn select_cases(records: &[TripRecord], criterion: CaseCriterion, variant: Variant, n: usize) -> Vec<TripRecord> {
    let mut rows: Vec<&TripRecord> = records.iter().filter(|r| r.variant == variant).collect();
    rows.sort_by(|a, b| {
        criterion
            .score(b)
            .total_cmp(&criterion.score(a))
            .then_with(|| a.trip_id.cmp(&b.trip_id))
            .then_with(|| a.seed.cmp(&b.seed))
            .then_with(|| a.fold.cmp(&b.fold))
    });
    rows.into_iter().take(n).cloned().collect()
}
