//! Perception agent: a model-agnostic mapping from context vectors to
//! non-negative boarding and alighting proposals.

mod forest;
pub(crate) mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ContextVector;
use crate::model::Trip;

pub use forest::{BaggedTreeRegressor, ForestParams, FORMAT_NAME, FORMAT_VERSION};

/// Boarding and alighting proposal for one stop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowProposal {
    pub board: f64,
    pub alight: f64,
}

/// Any fitted flow model. Implementations must be deterministic and return
/// non-negative proposals.
pub trait FlowPredictor: Send + Sync {
    /// Context dimensionality the model was fitted on.
    fn dim(&self) -> usize;

    /// Raw model output before the non-negativity clamp.
    fn predict_raw(&self, x: &[f64]) -> (f64, f64);

    fn predict(&self, x: &[f64]) -> Result<FlowProposal> {
        if x.len() != self.dim() {
            return Err(Error::input(format!(
                "context has {} features, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        let (b, a) = self.predict_raw(x);
        Ok(FlowProposal { board: b.max(0.0), alight: a.max(0.0) })
    }
}

/// Replays the ground-truth flows of a trip, ignoring the context. Used to
/// check that the recursion is exact when perception is perfect.
#[derive(Debug, Clone)]
pub struct TruthReplay {
    flows: Vec<(f64, f64)>,
    dim: usize,
}

impl TruthReplay {
    /// The context passed to `predict` must carry the stop index in its
    /// first slot; see [`TruthReplay::contexts`].
    pub fn new(trip: &Trip) -> Self {
        TruthReplay {
            flows: trip.events.iter().map(|e| (f64::from(e.mc_board), f64::from(e.mc_alight))).collect(),
            dim: 1,
        }
    }

    pub fn contexts(trip: &Trip) -> Vec<ContextVector> {
        (0..trip.len()).map(|k| vec![k as f64]).collect()
    }
}

impl FlowPredictor for TruthReplay {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_raw(&self, x: &[f64]) -> (f64, f64) {
        self.flows[x[0] as usize]
    }
}

/// Samples for fitting a flow model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub x: Vec<ContextVector>,
    pub board: Vec<f64>,
    pub alight: Vec<f64>,
    pub weights: Vec<f64>,
    /// Stable per-sample keys; fitting is invariant to any reordering of
    /// samples that carries its keys along.
    pub keys: Vec<u64>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Appends one trip's contexts with unit weights and `(trip, stop)` keys.
    pub fn push_trip(&mut self, trip: &Trip, contexts: &[ContextVector]) {
        for (e, x) in trip.events.iter().zip(contexts) {
            self.x.push(x.clone());
            self.board.push(f64::from(e.mc_board));
            self.alight.push(f64::from(e.mc_alight));
            self.weights.push(1.0);
            self.keys.push(crate::rng::key_of(&format!("{}#{}", e.trip_id, e.stop_index)));
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.len();
        if n == 0 {
            return Err(Error::input("empty training set"));
        }
        if self.board.len() != n || self.alight.len() != n || self.weights.len() != n || self.keys.len() != n {
            return Err(Error::input("training set columns differ in length"));
        }
        let dim = self.x[0].len();
        if self.x.iter().any(|r| r.len() != dim || r.iter().any(|v| !v.is_finite())) {
            return Err(Error::input("training contexts must be finite and of equal dimension"));
        }
        if self.board.iter().chain(&self.alight).any(|v| !v.is_finite()) {
            return Err(Error::input("training targets must be finite"));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::input("sample weights must be finite and >= 0"));
        }
        if self.weights.iter().all(|&w| w == 0.0) {
            return Err(Error::input("all sample weights are zero"));
        }
        Ok(())
    }
}
