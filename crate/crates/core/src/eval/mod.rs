//! Trip-grouped repeated cross-validation and the six-way ablation matrix.

mod artifacts;
mod cases;
mod metrics;
mod report;
mod run;
mod splits;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::FusionMode;
use crate::error::Error;

pub use artifacts::{fold_tag, FittedArtifacts};
pub use cases::{select_cases, CaseCriterion};
pub use metrics::{apc_bad_label, apc_inconsistency_rate, fit_tau_bad, tau_from_rates, trip_metrics, TripMetrics};
pub use report::{format_table, read_trip_records, write_outputs, write_traces, OUTPUT_FILES};
pub use run::{
    run_ablation_matrix, run_ablation_matrix_with, run_fold, FoldReport, Metric, RunReport, Subset, Summary,
    TripRecord, VariantFoldMetrics, VariantSummary,
};
pub use splits::{make_splits, Fold, SplitPlan};

/// Ablation rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    PerceptionOnly,
    PhysOnly,
    FixedFusion,
    NoReweight,
    ShiftProbe,
    Proposed,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::PerceptionOnly,
        Variant::PhysOnly,
        Variant::FixedFusion,
        Variant::NoReweight,
        Variant::ShiftProbe,
        Variant::Proposed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::PerceptionOnly => "perception_only",
            Variant::PhysOnly => "phys_only",
            Variant::FixedFusion => "fixed_fusion",
            Variant::NoReweight => "no_reweight",
            Variant::ShiftProbe => "shift_probe",
            Variant::Proposed => "proposed",
        }
    }

    /// Row label in the text tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::PerceptionOnly => "Perception-only (open-loop)",
            Variant::PhysOnly => "No fusion (phys-only)",
            Variant::FixedFusion => "Fixed fusion (alpha0)",
            Variant::NoReweight => "No reweight (rule; no shift)",
            Variant::ShiftProbe => "With shift probe",
            Variant::Proposed => "Proposed: rule fusion (no shift)",
        }
    }

    pub fn mode(self) -> FusionMode {
        match self {
            Variant::PerceptionOnly => FusionMode::PerceptionOnly,
            Variant::PhysOnly => FusionMode::PhysOnly,
            Variant::FixedFusion => FusionMode::FixedFusion,
            Variant::NoReweight | Variant::ShiftProbe | Variant::Proposed => FusionMode::RuleFusion,
        }
    }

    /// Whether the variant uses the reweighted model. Perception-only and
    /// no-reweight run the unit-weight model.
    pub fn uses_refit(self) -> bool {
        !matches!(self, Variant::PerceptionOnly | Variant::NoReweight)
    }

    pub fn shift(self) -> bool {
        self == Variant::ShiftProbe
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}
