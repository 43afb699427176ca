//! Closed-loop passenger-load estimation for transit vehicles.
//!
//! Per-stop flow proposals from a learned model are projected onto the
//! feasible load set, fused with Wi-Fi derived load anchors under an
//! adaptive trust weight, and fed back as the next stop's state. Around the
//! core recursion sit a trip-level drift correction, residual-driven
//! reweighting of the flow model, a Poisson/Binomial plausibility audit, and
//! a trip-grouped cross-validation harness.

// `!(x >= 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abm;
pub mod calibration;
pub mod config;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod eval;
pub mod exec;
pub mod fingerprint;
pub mod fusion;
pub mod ingest;
pub mod model;
pub mod perception;
pub mod projection;
pub mod rng;
pub mod stats;
pub mod synth;

pub use config::Config;
pub use error::{Error, Result};
pub use exec::Exec;
pub use model::{Capacity, StepTrace, StopEvent, Trajectory, Trip};
