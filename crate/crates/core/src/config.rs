//! Single TOML configuration holding every tunable default of the pipeline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abm::AbmParams;
use crate::calibration::{ReweightParams, ShiftGateParams};
use crate::error::{Error, Result};
use crate::eval::Variant;
use crate::fusion::TrustParams;
use crate::ingest::DEFAULT_TOLERANCE_SECONDS;
use crate::model::Capacity;
use crate::perception::ForestParams;
use crate::synth::{SynthConfig, DEFAULT_POI_RADIUS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    pub tolerance_seconds: i64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig { tolerance_seconds: DEFAULT_TOLERANCE_SECONDS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemanticsConfig {
    pub enabled: bool,
    pub k: usize,
    pub radius: u32,
    pub seed: u64,
}

impl Default for SemanticsConfig {
    fn default() -> Self {
        SemanticsConfig { enabled: true, k: 4, radius: DEFAULT_POI_RADIUS, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccupancyMode {
    /// Fit a (stop, hour) mean-load prior on each fold's training trips.
    Fitted,
    /// Read the `occupancy_prior` field of each event.
    EventField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextConfig {
    pub use_weather: bool,
    pub occupancy: OccupancyMode,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig { use_weather: true, occupancy: OccupancyMode::Fitted }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub seeds: Vec<u64>,
    pub folds: usize,
    /// Quantile of training APC inconsistency rates used as the bad-trip
    /// threshold.
    pub tau_quantile: f64,
    /// Folds with fewer bad test trips are left out of stress aggregates.
    pub min_bad_trips: usize,
    /// Anchored stops with a trust weight above this count as gated.
    pub gating_alpha: f64,
    pub variants: Vec<Variant>,
    /// Run the ABM audit on each test trip of the proposed variant.
    pub abm_audit: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            seeds: vec![42, 123, 999],
            folds: 5,
            tau_quantile: 0.75,
            min_bad_trips: 3,
            gating_alpha: 0.9,
            variants: Variant::ALL.to_vec(),
            abm_audit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Vehicle capacity used by the estimator.
    pub capacity: f64,
    pub synth: SynthConfig,
    pub alignment: AlignmentConfig,
    pub semantics: SemanticsConfig,
    pub context: ContextConfig,
    pub forest: ForestParams,
    pub trust: TrustParams,
    pub shift: ShiftGateParams,
    pub reweight: ReweightParams,
    pub abm: AbmParams,
    pub evaluation: EvaluationConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            capacity: Capacity::DEFAULT.get(),
            synth: SynthConfig::default(),
            alignment: AlignmentConfig::default(),
            semantics: SemanticsConfig::default(),
            context: ContextConfig::default(),
            forest: ForestParams::default(),
            trust: TrustParams::default(),
            shift: ShiftGateParams::default(),
            reweight: ReweightParams::default(),
            abm: AbmParams::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl Config {
    pub fn capacity(&self) -> Result<Capacity> {
        Capacity::new(self.capacity).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.capacity()?;
        self.synth.validate()?;
        if self.alignment.tolerance_seconds < 0 {
            return Err(Error::Config("alignment.tolerance_seconds must be >= 0".into()));
        }
        if self.semantics.enabled && self.semantics.k == 0 {
            return Err(Error::Config("semantics.k must be > 0".into()));
        }
        self.forest.validate()?;
        self.trust.validate()?;
        self.shift.validate()?;
        self.reweight.validate()?;
        self.abm.validate()?;
        let ev = &self.evaluation;
        if ev.seeds.is_empty() {
            return Err(Error::Config("evaluation.seeds must not be empty".into()));
        }
        if ev.folds < 2 {
            return Err(Error::Config("evaluation.folds must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&ev.tau_quantile) {
            return Err(Error::Config("evaluation.tau_quantile must be within [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&ev.gating_alpha) {
            return Err(Error::Config("evaluation.gating_alpha must be within [0, 1]".into()));
        }
        if ev.variants.is_empty() {
            return Err(Error::Config("evaluation.variants must not be empty".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
