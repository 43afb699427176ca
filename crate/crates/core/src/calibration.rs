//! Trip-level gated shift and the residual-driven reweighting loop.

use serde::{Deserialize, Serialize};

use crate::engine::{run_proposals, FusionMode};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fusion::TrustParams;
use crate::ingest::ContextVector;
use crate::model::{Capacity, Trip};
use crate::perception::{BaggedTreeRegressor, FlowPredictor, FlowProposal, ForestParams, TrainingSet};
use crate::stats::{mean, median, std_ddof1};

/// Minimum number of anchored stops before the gate may fire.
pub const MIN_ANCHORED_STOPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftGateParams {
    pub min_anchor_fraction: f64,
    pub mean_threshold: f64,
    pub std_threshold: f64,
}

impl Default for ShiftGateParams {
    fn default() -> Self {
        ShiftGateParams { min_anchor_fraction: 0.5, mean_threshold: 5.0, std_threshold: 4.0 }
    }
}

impl ShiftGateParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_anchor_fraction) {
            return Err(Error::Config(format!("min_anchor_fraction {} outside [0, 1]", self.min_anchor_fraction)));
        }
        if !(self.mean_threshold > 0.0 && self.std_threshold > 0.0) {
            return Err(Error::Config("shift thresholds must be > 0".into()));
        }
        Ok(())
    }
}

/// Where the training-side residuals driving the reweighting come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualSource {
    /// Forward pass with the initial model's in-sample predictions.
    InSample,
    /// Forward pass with out-of-bag predictions of the initial model.
    OutOfBag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReweightParams {
    pub lambda: f64,
    pub omega_max: f64,
    pub residual_source: ResidualSource,
}

impl Default for ReweightParams {
    fn default() -> Self {
        ReweightParams { lambda: 0.5, omega_max: 5.0, residual_source: ResidualSource::OutOfBag }
    }
}

impl ReweightParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("reweight lambda {} must be >= 0", self.lambda)));
        }
        if !(self.omega_max >= 1.0 && self.omega_max.is_finite()) {
            return Err(Error::Config(format!("omega_max {} must be >= 1", self.omega_max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftDecision {
    pub gate: bool,
    pub delta: f64,
}

/// Drift detector on anchor residuals `y - L`.
pub fn shift_gate(loads: &[f64], anchors: &[Option<f64>], params: &ShiftGateParams) -> Result<ShiftDecision> {
    if loads.len() != anchors.len() {
        return Err(Error::input(format!("{} loads for {} anchors", loads.len(), anchors.len())));
    }
    let off = ShiftDecision { gate: false, delta: 0.0 };
    let r: Vec<f64> = loads.iter().zip(anchors).filter_map(|(l, y)| y.map(|y| y - l)).collect();
    if r.len() < MIN_ANCHORED_STOPS {
        return Ok(off);
    }
    let fraction = r.len() as f64 / loads.len() as f64;
    let gate = fraction >= params.min_anchor_fraction
        && mean(&r).abs() > params.mean_threshold
        && std_ddof1(&r) < params.std_threshold;
    Ok(if gate { ShiftDecision { gate, delta: median(&r) } } else { off })
}

pub fn apply_shift(loads: &[f64], decision: ShiftDecision, capacity: Capacity) -> Vec<f64> {
    if !decision.gate {
        return loads.to_vec();
    }
    loads.iter().map(|l| capacity.clamp(l + decision.delta)).collect()
}

pub fn reweight(e_phys: f64, params: &ReweightParams) -> f64 {
    (1.0 + params.lambda * e_phys).min(params.omega_max)
}

pub fn compute_reweights(e_phys: &[f64], params: &ReweightParams) -> Vec<f64> {
    e_phys.iter().map(|&e| reweight(e, params)).collect()
}

/// Training-side inputs for the closed loop. `contexts[i]` and `anchors[i]`
/// belong to `trips[i]`.
#[derive(Debug, Clone, Copy)]
pub struct TrainView<'a> {
    pub trips: &'a [&'a Trip],
    pub contexts: &'a [Vec<ContextVector>],
    pub anchors: &'a [Vec<Option<f64>>],
}

impl TrainView<'_> {
    fn validate(&self) -> Result<()> {
        if self.trips.len() != self.contexts.len() || self.trips.len() != self.anchors.len() {
            return Err(Error::input("training view columns differ in length"));
        }
        for ((t, c), a) in self.trips.iter().zip(self.contexts).zip(self.anchors) {
            if c.len() != t.len() || a.len() != t.len() {
                return Err(Error::input(format!("trip {}: contexts or anchors misaligned", t.trip_id)));
            }
        }
        Ok(())
    }

    pub fn training_set(&self) -> TrainingSet {
        let mut ts = TrainingSet::default();
        for (t, c) in self.trips.iter().zip(self.contexts) {
            ts.push_trip(t, c);
        }
        ts
    }
}

#[derive(Debug, Clone)]
pub struct RefitOutcome {
    pub initial: BaggedTreeRegressor,
    pub refit: BaggedTreeRegressor,
    /// Sample weights used for the refit, in training-set order.
    pub weights: Vec<f64>,
}

/// Unit-weight fit, one rule-fusion forward pass over the training trips,
/// reweighting from its projection residuals, and exactly one refit.
pub fn closed_loop_refit(
    train: TrainView<'_>,
    forest: &ForestParams,
    reweight_params: &ReweightParams,
    trust: &TrustParams,
    capacity: Capacity,
    exec: Exec,
) -> Result<RefitOutcome> {
    train.validate()?;
    reweight_params.validate()?;
    let mut data = train.training_set();
    let (initial, oob) = BaggedTreeRegressor::fit_with(&data, forest, exec)?;

    let mut offsets = Vec::with_capacity(train.trips.len());
    let mut at = 0;
    for t in train.trips {
        offsets.push(at);
        at += t.len();
    }
    let per_trip: Vec<Result<Vec<f64>>> = exec.map(train.trips.len(), |i| {
        let trip = train.trips[i];
        let proposals: Vec<FlowProposal> = match reweight_params.residual_source {
            ResidualSource::OutOfBag => oob[offsets[i]..offsets[i] + trip.len()]
                .iter()
                .map(|&(board, alight)| FlowProposal { board, alight })
                .collect(),
            ResidualSource::InSample => {
                train.contexts[i].iter().map(|x| initial.predict(x)).collect::<Result<_>>()?
            }
        };
        let tr = run_proposals(&trip.trip_id, &proposals, &train.anchors[i], trust, capacity, FusionMode::RuleFusion)?;
        Ok(tr.e_phys())
    });
    let mut e_phys = Vec::with_capacity(data.len());
    for r in per_trip {
        e_phys.extend(r?);
    }
    let weights = compute_reweights(&e_phys, reweight_params);
    let refit = if weights.iter().all(|&w| w == 1.0) {
        initial.clone()
    } else {
        data.weights.clone_from(&weights);
        BaggedTreeRegressor::fit_with(&data, forest, exec)?.0
    };
    Ok(RefitOutcome { initial, refit, weights })
}
