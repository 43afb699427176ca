use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use paxload::abm::simulate_with;
use paxload::calibration::TrainView;
use paxload::eval::{make_splits, run_fold};
use paxload::ingest::{fit_anchor_map, ContextBuilder, OccupancyPrior, OccupancySource};
use paxload::perception::{BaggedTreeRegressor, ForestParams};
use paxload::synth::generate_corpus;
use paxload::{Capacity, Config, Exec, Trip};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn bench(c: &mut Criterion) {
    let mut cfg = Config::default();
    cfg.synth.n_trips = 80;
    let corpus = generate_corpus(&cfg.synth).unwrap();
    let trips: Vec<&Trip> = corpus.trips.iter().collect();

    let context =
        ContextBuilder::fit(&trips, None, true, OccupancySource::Fitted(OccupancyPrior::fit(&trips))).unwrap();
    let contexts: Vec<_> = trips.iter().map(|t| context.build(t, None).unwrap()).collect();
    let anchor_map = fit_anchor_map(&trips);
    let anchors: Vec<_> = trips.iter().map(|t| anchor_map.anchors_for(t)).collect();
    let data = TrainView { trips: &trips, contexts: &contexts, anchors: &anchors }.training_set();
    let forest = ForestParams::default();

    let mut g = c.benchmark_group("forest_fit");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| BaggedTreeRegressor::fit_with(black_box(&data), &forest, exec).unwrap())
        });
    }
    g.finish();

    let rates: Vec<(f64, f64)> = (0..30).map(|k| (3.0 + (k % 7) as f64, 0.05 + (k % 5) as f64 * 0.05)).collect();
    let cap = Capacity::new(80.0).unwrap();
    let mut g = c.benchmark_group("abm_simulate");
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate_with(black_box(&rates), 2000, 1, cap, exec).unwrap())
        });
    }
    g.finish();

    let ids: Vec<String> = corpus.trips.iter().map(|t| t.trip_id.clone()).collect();
    let plan = make_splits(&ids, &[42], 5).unwrap();
    let mut g = c.benchmark_group("fold");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_fold(&corpus.trips, Some(&corpus.poi), &plan.folds[0], &cfg, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
