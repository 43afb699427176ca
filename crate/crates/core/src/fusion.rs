//! Trust policy and fusion agent.
//!
//! The weight on the physical state is `alpha = 1 / (1 + omega)` with
//! `omega = v * exp(-d / s_d) * exp(-e / s_e)`; the fused state is the
//! clamped convex combination of the physical state and the anchor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Capacity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustParams {
    /// Disagreement scale, passengers.
    pub s_d: f64,
    /// Residual scale, passengers.
    pub s_e: f64,
    /// Constant weight used by the fixed-fusion baseline.
    pub alpha0: f64,
}

impl Default for TrustParams {
    fn default() -> Self {
        TrustParams { s_d: 15.0, s_e: 5.0, alpha0: 0.5 }
    }
}

impl TrustParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_d > 0.0 && self.s_e > 0.0) {
            return Err(Error::Config(format!(
                "trust scales must be > 0 (s_d={}, s_e={})",
                self.s_d, self.s_e
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha0) {
            return Err(Error::Config(format!("alpha0 {} outside [0, 1]", self.alpha0)));
        }
        Ok(())
    }
}

pub fn trust_weight(anchor_valid: bool, disagreement: f64, e_phys: f64, params: &TrustParams) -> f64 {
    if !anchor_valid {
        return 1.0;
    }
    let omega = (-disagreement / params.s_d).exp() * (-e_phys / params.s_e).exp();
    1.0 / (1.0 + omega)
}

pub fn disagreement(y_load: f64, l_phys: f64) -> f64 {
    (y_load - l_phys).abs()
}

/// Clamped convex combination of the physical state and the anchor. Without
/// an anchor the physical state is returned unchanged and `alpha` must be 1.
pub fn fuse(l_phys: f64, y_load: Option<f64>, alpha: f64, capacity: Capacity) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::contract(format!("trust weight {alpha} outside [0, 1]")));
    }
    match y_load {
        None if alpha != 1.0 => Err(Error::contract(format!(
            "no anchor but trust weight {alpha} != 1"
        ))),
        None => Ok(l_phys),
        Some(y) => Ok(capacity.clamp(alpha * l_phys + (1.0 - alpha) * y)),
    }
}
