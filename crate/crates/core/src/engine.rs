//! Per-stop cascade: predict, project, weigh trust, fuse, and feed the
//! fused state back as the next stop's initial load.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{disagreement, fuse, trust_weight, TrustParams};
use crate::ingest::{AnchorMap, ContextVector};
use crate::model::{shadow_trajectory, Capacity, StepTrace, Trajectory, Trip};
use crate::perception::{FlowPredictor, FlowProposal};
use crate::projection::project;

/// Which parts of the cascade run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Cumulative sum of proposals; no projection, no fusion.
    PerceptionOnly,
    /// Projection with the trust weight forced to 1.
    PhysOnly,
    /// Constant trust weight `alpha0` wherever an anchor exists.
    FixedFusion,
    /// Trust weight from the disagreement/residual rule.
    RuleFusion,
}

/// Runs the cascade for one trip: predicts flows from the contexts and
/// derives anchors from the map (no anchors when `anchor_map` is `None` or
/// unusable).
pub fn run_trip(
    trip: &Trip,
    contexts: &[ContextVector],
    predictor: &dyn FlowPredictor,
    anchor_map: Option<&AnchorMap>,
    trust: &TrustParams,
    capacity: Capacity,
    mode: FusionMode,
) -> Result<Trajectory> {
    if contexts.len() != trip.len() {
        return Err(Error::input(format!(
            "trip {}: {} contexts for {} stops",
            trip.trip_id,
            contexts.len(),
            trip.len()
        )));
    }
    let proposals = contexts
        .iter()
        .enumerate()
        .map(|(k, x)| predictor.predict(x).map_err(|e| at(&trip.trip_id, k, e)))
        .collect::<Result<Vec<_>>>()?;
    let anchors = match anchor_map {
        Some(m) => m.anchors_for(trip),
        None => vec![None; trip.len()],
    };
    run_proposals(&trip.trip_id, &proposals, &anchors, trust, capacity, mode)
}

fn at(trip_id: &str, stop_index: usize, e: Error) -> Error {
    Error::AtStop { trip_id: trip_id.to_string(), stop_index, source: Box::new(e) }
}

/// Runs the cascade from precomputed proposals and anchors.
pub fn run_proposals(
    trip_id: &str,
    proposals: &[FlowProposal],
    anchors: &[Option<f64>],
    trust: &TrustParams,
    capacity: Capacity,
    mode: FusionMode,
) -> Result<Trajectory> {
    if proposals.len() != anchors.len() {
        return Err(Error::input(format!(
            "trip {trip_id}: {} proposals for {} anchors",
            proposals.len(),
            anchors.len()
        )));
    }
    let b: Vec<f64> = proposals.iter().map(|p| p.board).collect();
    let a: Vec<f64> = proposals.iter().map(|p| p.alight).collect();
    let shadow = shadow_trajectory(&b, &a, 0.0)?;

    let mut steps = Vec::with_capacity(proposals.len());
    let mut l_prev = 0.0;
    for (k, (p, &anchor)) in proposals.iter().zip(anchors).enumerate() {
        let step = match mode {
            FusionMode::PerceptionOnly => {
                let l = capacity.clamp(shadow[k]);
                StepTrace {
                    b_hat: p.board,
                    a_hat: p.alight,
                    a_star: p.alight,
                    b_star: p.board,
                    l_phys: l,
                    e_phys: 0.0,
                    y_load: None,
                    disagreement: None,
                    alpha: None,
                    l_fused: l,
                }
            }
            _ => {
                let proj = project(l_prev, p.board, p.alight, capacity).map_err(|e| at(trip_id, k, e))?;
                let d = anchor.map(|y| disagreement(y, proj.l_phys));
                let alpha = anchor.map(|_| match mode {
                    FusionMode::PhysOnly => 1.0,
                    FusionMode::FixedFusion => trust.alpha0,
                    _ => trust_weight(true, d.unwrap_or(0.0), proj.e_phys, trust),
                });
                let l_fused = fuse(proj.l_phys, anchor, alpha.unwrap_or(1.0), capacity).map_err(|e| at(trip_id, k, e))?;
                StepTrace {
                    b_hat: p.board,
                    a_hat: p.alight,
                    a_star: proj.a_star,
                    b_star: proj.b_star,
                    l_phys: proj.l_phys,
                    e_phys: proj.e_phys,
                    y_load: anchor,
                    disagreement: d,
                    alpha,
                    l_fused,
                }
            }
        };
        l_prev = step.l_fused;
        steps.push(step);
    }
    let l_final = steps.iter().map(|s| s.l_fused).collect();
    Ok(Trajectory { trip_id: trip_id.to_string(), steps, l_final, shadow })
}
