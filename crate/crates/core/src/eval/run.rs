use serde::{Deserialize, Serialize};

use crate::abm::audit;
use crate::calibration::{apply_shift, shift_gate};
use crate::config::Config;
use crate::engine::run_proposals;
use crate::error::Result;
use crate::eval::artifacts::{fold_tag, select, FittedArtifacts};
use crate::eval::metrics::{apc_inconsistency_rate, trip_metrics};
use crate::eval::splits::{make_splits, Fold};
use crate::eval::Variant;
use crate::exec::Exec;
use crate::ingest::PoiTable;
use crate::model::{shadow_infeasibility_rate, Trajectory, Trip};
use crate::perception::{FlowPredictor, FlowProposal};
use crate::projection::e_phys_rate;
use crate::rng::{derive_seed, key_of};
use crate::stats::{mean, std_ddof1};

/// One test trip under one variant in one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub seed: u64,
    pub fold: usize,
    pub variant: Variant,
    pub trip_id: String,
    pub n_stops: usize,
    pub rmse: f64,
    pub mae: f64,
    pub end_ae: f64,
    /// RMSE of the unclamped estimate; differs from `rmse` only for the
    /// perception-only variant.
    pub rmse_raw: f64,
    pub shadow_infeasibility: f64,
    pub e_phys_rate: f64,
    pub cum_ephys: f64,
    /// Fraction of anchored stops whose trust weight exceeds the gating
    /// threshold; 0 without anchors.
    pub gating_freq: f64,
    pub anchored: usize,
    pub shifted: bool,
    pub shift_delta: f64,
    pub apc_rate: f64,
    pub apc_bad: bool,
    pub abm_coverage: Option<f64>,
    pub abm_mean_w1: Option<f64>,
    pub abm_shocks: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    ApcBad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rmse,
    Mae,
    EndAe,
    RmseRaw,
    ShadowInfeasibility,
    EphysRate,
    ShiftRate,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Rmse,
        Metric::Mae,
        Metric::EndAe,
        Metric::RmseRaw,
        Metric::ShadowInfeasibility,
        Metric::EphysRate,
        Metric::ShiftRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Mae => "mae",
            Metric::EndAe => "end_ae",
            Metric::RmseRaw => "rmse_raw",
            Metric::ShadowInfeasibility => "shadow_infeasibility",
            Metric::EphysRate => "e_phys_rate",
            Metric::ShiftRate => "shift_rate",
        }
    }

    pub fn of_trip(self, r: &TripRecord) -> f64 {
        match self {
            Metric::Rmse => r.rmse,
            Metric::Mae => r.mae,
            Metric::EndAe => r.end_ae,
            Metric::RmseRaw => r.rmse_raw,
            Metric::ShadowInfeasibility => r.shadow_infeasibility,
            Metric::EphysRate => r.e_phys_rate,
            Metric::ShiftRate => f64::from(u8::from(r.shifted)),
        }
    }

    pub fn of(self, m: &VariantFoldMetrics) -> f64 {
        match self {
            Metric::Rmse => m.rmse,
            Metric::Mae => m.mae,
            Metric::EndAe => m.end_ae,
            Metric::RmseRaw => m.rmse_raw,
            Metric::ShadowInfeasibility => m.shadow_infeasibility,
            Metric::EphysRate => m.e_phys_rate,
            Metric::ShiftRate => m.shift_rate,
        }
    }
}

/// Means over the trips of one fold. Rates are fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantFoldMetrics {
    pub variant: Variant,
    pub n_trips: usize,
    pub rmse: f64,
    pub mae: f64,
    pub end_ae: f64,
    pub rmse_raw: f64,
    pub shadow_infeasibility: f64,
    pub e_phys_rate: f64,
    pub shift_rate: f64,
}

impl VariantFoldMetrics {
    pub fn from_records<'a>(variant: Variant, records: impl IntoIterator<Item = &'a TripRecord>) -> Self {
        let rs: Vec<&TripRecord> = records.into_iter().filter(|r| r.variant == variant).collect();
        let avg = |m: Metric| mean(&rs.iter().map(|r| m.of_trip(r)).collect::<Vec<_>>());
        VariantFoldMetrics {
            variant,
            n_trips: rs.len(),
            rmse: avg(Metric::Rmse),
            mae: avg(Metric::Mae),
            end_ae: avg(Metric::EndAe),
            rmse_raw: avg(Metric::RmseRaw),
            shadow_infeasibility: avg(Metric::ShadowInfeasibility),
            e_phys_rate: avg(Metric::EphysRate),
            shift_rate: avg(Metric::ShiftRate),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub seed: u64,
    pub index: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub tau_bad: f64,
    pub fingerprint: String,
    pub bad_trips: Vec<String>,
    pub all: Vec<VariantFoldMetrics>,
    /// Present only when the fold holds enough bad trips.
    pub stress: Option<Vec<VariantFoldMetrics>>,
    pub trips: Vec<TripRecord>,
    #[serde(skip)]
    pub trajectories: Vec<(Variant, Trajectory)>,
}

impl FoldReport {
    pub fn metrics(&self, subset: Subset, variant: Variant) -> Option<&VariantFoldMetrics> {
        let rows = match subset {
            Subset::All => Some(&self.all),
            Subset::ApcBad => self.stress.as_ref(),
        }?;
        rows.iter().find(|m| m.variant == variant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    fn of(xs: &[f64]) -> Self {
        Summary { mean: mean(xs), std: std_ddof1(xs) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub n_folds: usize,
    pub metrics: Vec<(Metric, Summary)>,
}

impl VariantSummary {
    pub fn get(&self, metric: Metric) -> Summary {
        self.metrics.iter().find(|(m, _)| *m == metric).map(|(_, s)| *s).expect("every metric is summarized")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub variants: Vec<Variant>,
    pub folds: Vec<FoldReport>,
    pub all: Vec<VariantSummary>,
    pub stress: Vec<VariantSummary>,
    pub stress_folds: usize,
}

impl RunReport {
    /// Fold-level values of one metric, optionally restricted to a seed.
    pub fn fold_values(&self, subset: Subset, variant: Variant, metric: Metric, seed: Option<u64>) -> Vec<f64> {
        self.folds
            .iter()
            .filter(|f| seed.is_none_or(|s| f.seed == s))
            .filter_map(|f| f.metrics(subset, variant))
            .map(|m| metric.of(m))
            .collect()
    }

    pub fn summary(&self, subset: Subset, variant: Variant) -> Option<&VariantSummary> {
        let rows = match subset {
            Subset::All => &self.all,
            Subset::ApcBad => &self.stress,
        };
        rows.iter().find(|s| s.variant == variant)
    }

    fn summarize(folds: &[FoldReport], variants: &[Variant], subset: Subset) -> Vec<VariantSummary> {
        variants
            .iter()
            .map(|&variant| {
                let rows: Vec<&VariantFoldMetrics> = folds.iter().filter_map(|f| f.metrics(subset, variant)).collect();
                VariantSummary {
                    variant,
                    n_folds: rows.len(),
                    metrics: Metric::ALL
                        .iter()
                        .map(|&m| (m, Summary::of(&rows.iter().map(|r| m.of(r)).collect::<Vec<_>>())))
                        .collect(),
                }
            })
            .collect()
    }
}

pub fn run_ablation_matrix(trips: &[Trip], poi: Option<&PoiTable>, cfg: &Config) -> Result<RunReport> {
    run_ablation_matrix_with(trips, poi, cfg, Exec::default())
}

/// Runs every fold of the split plan. Folds are independent jobs; results
/// are identical for either execution policy.
pub fn run_ablation_matrix_with(trips: &[Trip], poi: Option<&PoiTable>, cfg: &Config, exec: Exec) -> Result<RunReport> {
    cfg.validate()?;
    let ids: Vec<String> = trips.iter().map(|t| t.trip_id.clone()).collect();
    let plan = make_splits(&ids, &cfg.evaluation.seeds, cfg.evaluation.folds)?;
    let folds = exec
        .map_slice(&plan.folds, |f| run_fold(trips, poi, f, cfg, exec))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let variants = cfg.evaluation.variants.clone();
    let all = RunReport::summarize(&folds, &variants, Subset::All);
    let stress = RunReport::summarize(&folds, &variants, Subset::ApcBad);
    let stress_folds = folds.iter().filter(|f| f.stress.is_some()).count();
    Ok(RunReport { variants, folds, all, stress, stress_folds })
}

struct TripRun {
    records: Vec<TripRecord>,
    trajectories: Vec<(Variant, Trajectory)>,
}

pub fn run_fold(trips: &[Trip], poi: Option<&PoiTable>, fold: &Fold, cfg: &Config, exec: Exec) -> Result<FoldReport> {
    let test = select(trips, &fold.test)?;
    let tag = fold_tag(fold.seed, fold.index);
    let artifacts = FittedArtifacts::fit_fold(trips, poi, fold, cfg, exec)?;
    artifacts.check_disjoint(&test)?;

    let runs = exec
        .map_slice(&test, |t| run_test_trip(t, poi, fold, &artifacts, cfg, tag, exec))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::new();
    let mut trajectories = Vec::new();
    for r in runs {
        records.extend(r.records);
        trajectories.extend(r.trajectories);
    }

    let variants = &cfg.evaluation.variants;
    let all = variants.iter().map(|&v| VariantFoldMetrics::from_records(v, &records)).collect();
    let bad_trips: Vec<String> = test.iter().map(|t| t.trip_id.clone()).filter(|id| {
        records.iter().any(|r| &r.trip_id == id && r.apc_bad)
    }).collect();
    let stress = (bad_trips.len() >= cfg.evaluation.min_bad_trips).then(|| {
        variants
            .iter()
            .map(|&v| VariantFoldMetrics::from_records(v, records.iter().filter(|r| r.apc_bad)))
            .collect()
    });
    Ok(FoldReport {
        seed: fold.seed,
        index: fold.index,
        n_train: fold.train.len(),
        n_test: test.len(),
        tau_bad: artifacts.tau_bad,
        fingerprint: artifacts.fingerprint(),
        bad_trips,
        all,
        stress,
        trips: records,
        trajectories,
    })
}

fn proposals(model: &dyn FlowPredictor, contexts: &[Vec<f64>]) -> Result<Vec<FlowProposal>> {
    contexts.iter().map(|x| model.predict(x)).collect()
}

fn run_test_trip(
    trip: &Trip,
    poi: Option<&PoiTable>,
    fold: &Fold,
    art: &FittedArtifacts,
    cfg: &Config,
    tag: u64,
    exec: Exec,
) -> Result<TripRun> {
    let capacity = cfg.capacity()?;
    let contexts = art.context.build(trip, poi)?;
    let anchors = art.anchor_map.anchors_for(trip);
    let initial = proposals(&art.initial, &contexts)?;
    let refit = proposals(&art.refit, &contexts)?;
    let truth = trip.mc_load();
    let apc_rate = apc_inconsistency_rate(trip, capacity)?;
    let apc_bad = apc_rate > art.tau_bad;

    let mut records = Vec::new();
    let mut trajectories = Vec::new();
    for &variant in &cfg.evaluation.variants {
        let props = if variant.uses_refit() { &refit } else { &initial };
        let mut tr = run_proposals(&trip.trip_id, props, &anchors, &cfg.trust, capacity, variant.mode())?;
        let (shifted, shift_delta) = if variant.shift() {
            let d = shift_gate(&tr.l_final, &tr.anchors(), &cfg.shift)?;
            tr.l_final = apply_shift(&tr.l_final, d, capacity);
            (d.gate, d.delta)
        } else {
            (false, 0.0)
        };
        let m = trip_metrics(&tr.l_final, &truth)?;
        let rmse_raw = if variant == Variant::PerceptionOnly { trip_metrics(&tr.shadow, &truth)?.rmse } else { m.rmse };
        let anchored: Vec<f64> = tr.steps.iter().filter_map(|s| s.alpha).collect();
        let gated = anchored.iter().filter(|&&a| a > cfg.evaluation.gating_alpha).count();
        let mut rec = TripRecord {
            seed: fold.seed,
            fold: fold.index,
            variant,
            trip_id: trip.trip_id.clone(),
            n_stops: trip.len(),
            rmse: m.rmse,
            mae: m.mae,
            end_ae: m.end_ae,
            rmse_raw,
            shadow_infeasibility: shadow_infeasibility_rate(&tr.shadow, capacity)?,
            e_phys_rate: e_phys_rate(&tr.steps)?,
            cum_ephys: tr.steps.iter().map(|s| s.e_phys).sum(),
            gating_freq: if anchored.is_empty() { 0.0 } else { gated as f64 / anchored.len() as f64 },
            anchored: anchored.len(),
            shifted,
            shift_delta,
            apc_rate,
            apc_bad,
            abm_coverage: None,
            abm_mean_w1: None,
            abm_shocks: None,
        };
        if variant == Variant::Proposed {
            if let Some(rates) = &art.abm {
                let labels = art.labels_for(trip, poi)?;
                let stop_rates = rates.stop_rates(trip, &labels)?;
                let params = crate::abm::AbmParams {
                    seed: derive_seed(cfg.abm.seed, "abm-audit", tag ^ key_of(&trip.trip_id)),
                    ..cfg.abm
                };
                let report = audit(&trip.trip_id, &tr.l_final, &stop_rates, &params, capacity, exec)?;
                rec.abm_coverage = Some(report.coverage);
                rec.abm_mean_w1 = Some(mean(&report.stops.iter().map(|s| s.w1).collect::<Vec<_>>()));
                rec.abm_shocks = Some(report.stops.iter().filter(|s| s.shock).count());
            }
        }
        records.push(rec);
        trajectories.push((variant, tr));
    }
    Ok(TripRun { records, trajectories })
}
