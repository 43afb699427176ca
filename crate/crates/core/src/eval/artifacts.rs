use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::abm::{calibrate_rates, AbmRates};
use crate::calibration::{closed_loop_refit, TrainView};
use crate::config::{Config, OccupancyMode};
use crate::error::{Error, Result};
use crate::eval::metrics::fit_tau_bad;
use crate::eval::splits::Fold;
use crate::exec::Exec;
use crate::fingerprint::Fingerprinter;
use crate::ingest::semantics::poi_for;
use crate::ingest::{
    fit_anchor_map, fit_semantics, stop_poi_vectors, AnchorMap, ContextBuilder, OccupancyPrior, OccupancySource,
    PoiTable, SemanticClusterer,
};
use crate::model::Trip;
use crate::perception::{BaggedTreeRegressor, ForestParams};
use crate::rng::{derive_seed, key_of};

/// Seed tag of one `(split seed, fold index)` job. Every randomized
/// artifact of the fold derives its seed from this tag and a purpose name,
/// so any fold can be re-run in isolation.
pub fn fold_tag(seed: u64, index: usize) -> u64 {
    key_of(&format!("fold/{seed}/{index}"))
}

/// Trips with the given ids, in id-list order.
pub(crate) fn select<'a>(trips: &'a [Trip], ids: &[String]) -> Result<Vec<&'a Trip>> {
    let by_id: BTreeMap<&str, &Trip> = trips.iter().map(|t| (t.trip_id.as_str(), t)).collect();
    ids.iter()
        .map(|id| by_id.get(id.as_str()).copied().ok_or_else(|| Error::input(format!("unknown trip id {id}"))))
        .collect()
}

/// Everything a fold fits, all from training trips only.
#[derive(Debug, Clone, Serialize)]
pub struct FittedArtifacts {
    pub train_ids: Vec<String>,
    pub semantics: Option<SemanticClusterer>,
    pub context: ContextBuilder,
    pub anchor_map: AnchorMap,
    #[serde(skip)]
    pub initial: BaggedTreeRegressor,
    #[serde(skip)]
    pub refit: BaggedTreeRegressor,
    pub tau_bad: f64,
    pub abm: Option<AbmRates>,
}

impl FittedArtifacts {
    pub fn fit(train: &[&Trip], poi: Option<&PoiTable>, cfg: &Config, tag: u64, exec: Exec) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::input("no training trips"));
        }
        let capacity = cfg.capacity()?;
        let sem_cfg = &cfg.semantics;
        let semantics = if sem_cfg.enabled {
            let stops = stop_poi_vectors(train, poi, sem_cfg.radius);
            Some(fit_semantics(&stops, sem_cfg.k, sem_cfg.radius, derive_seed(sem_cfg.seed, "semantics", tag))?)
        } else {
            None
        };
        let occupancy = match cfg.context.occupancy {
            OccupancyMode::Fitted => OccupancySource::Fitted(OccupancyPrior::fit(train)),
            OccupancyMode::EventField => OccupancySource::EventField,
        };
        let context = ContextBuilder::fit(train, semantics.clone(), cfg.context.use_weather, occupancy)?;
        let anchor_map = fit_anchor_map(train);

        let contexts = train.iter().map(|t| context.build(t, poi)).collect::<Result<Vec<_>>>()?;
        let anchors: Vec<Vec<Option<f64>>> = train.iter().map(|t| anchor_map.anchors_for(t)).collect();
        let forest = ForestParams { seed: derive_seed(cfg.forest.seed, "forest", tag), ..cfg.forest };
        let view = TrainView { trips: train, contexts: &contexts, anchors: &anchors };
        let refit = closed_loop_refit(view, &forest, &cfg.reweight, &cfg.trust, capacity, exec)?;

        let tau_bad = fit_tau_bad(train, capacity, cfg.evaluation.tau_quantile)?;
        let mut artifacts = FittedArtifacts {
            train_ids: train.iter().map(|t| t.trip_id.clone()).collect(),
            semantics,
            context,
            anchor_map,
            initial: refit.initial,
            refit: refit.refit,
            tau_bad,
            abm: None,
        };
        if cfg.evaluation.abm_audit {
            let labels = train.iter().map(|t| artifacts.labels_for(t, poi)).collect::<Result<Vec<_>>>()?;
            artifacts.abm = Some(calibrate_rates(train, &labels, artifacts.n_labels(), cfg.abm.kappa)?);
        }
        Ok(artifacts)
    }

    /// Fits on the training side of `fold`. Test trips are never read.
    pub fn fit_fold(trips: &[Trip], poi: Option<&PoiTable>, fold: &Fold, cfg: &Config, exec: Exec) -> Result<Self> {
        let train = select(trips, &fold.train)?;
        Self::fit(&train, poi, cfg, fold_tag(fold.seed, fold.index), exec)
    }

    pub fn n_labels(&self) -> usize {
        self.semantics.as_ref().map_or(1, SemanticClusterer::k)
    }

    /// Semantic label of every stop, all 0 when semantics are disabled.
    pub fn labels_for(&self, trip: &Trip, poi: Option<&PoiTable>) -> Result<Vec<usize>> {
        match &self.semantics {
            Some(s) => trip.events.iter().map(|e| s.assign(poi_for(e, poi, s.radius))).collect(),
            None => Ok(vec![0; trip.len()]),
        }
    }

    /// Content hash over every fitted artifact.
    pub fn fingerprint(&self) -> String {
        let mut f = Fingerprinter::default();
        f.json(self).bytes(self.initial.fingerprint().as_bytes()).bytes(self.refit.fingerprint().as_bytes());
        f.hex()
    }

    /// Fails when any test trip was part of the training set.
    pub fn check_disjoint(&self, test: &[&Trip]) -> Result<()> {
        let train: BTreeSet<&str> = self.train_ids.iter().map(String::as_str).collect();
        match test.iter().find(|t| train.contains(t.trip_id.as_str())) {
            Some(t) => Err(Error::Leakage(format!("test trip {} was used for fitting", t.trip_id))),
            None => Ok(()),
        }
    }
}
