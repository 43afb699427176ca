//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use paxload::abm::{audit, simulate, w1_point_mass, AbmParams};
use paxload::engine::{run_proposals, FusionMode};
use paxload::eval::{
    fold_tag, make_splits, run_ablation_matrix, FittedArtifacts, Metric, RunReport, Subset, Variant, OUTPUT_FILES,
};
use paxload::fusion::{fuse, trust_weight, TrustParams};
use paxload::perception::FlowProposal;
use paxload::projection::{project, RESIDUAL_EPS};
use paxload::rng::stream;
use paxload::synth::generate_corpus;
use paxload::{Capacity, Config, Exec, Trip};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cap(c: f64) -> Capacity {
    Capacity::new(c).unwrap()
}

/// Feasible clipping by enumeration: the largest alighting not exceeding
/// the load, then the largest boarding that fits.
fn clip_oracle(l: i64, b: i64, a: i64, c: i64) -> Option<(i64, i64, i64, i64)> {
    if !(0..=c).contains(&l) {
        return None;
    }
    let a_star = (0..=a).filter(|x| l - x >= 0).max()?;
    let b_star = (0..=b).filter(|y| l - a_star + y <= c).max()?;
    Some((a_star, b_star, l - a_star + b_star, (a - a_star) + (b - b_star)))
}

fn projection_oracle() -> Outcome {
    let c = cap(10.0);
    let mut cases = 0;
    for l in 0..=15i64 {
        for b in 0..=15i64 {
            for a in 0..=15i64 {
                cases += 1;
                let got = project(l as f64, b as f64, a as f64, c)
                    .ok()
                    .map(|p| (p.a_star, p.b_star, p.l_phys, p.e_phys));
                let want = clip_oracle(l, b, a, 10).map(|(x, y, z, w)| (x as f64, y as f64, z as f64, w as f64));
                if got != want {
                    return Err(format!("L={l} b={b} a={a}: got {got:?}, oracle {want:?}"));
                }
            }
        }
    }
    Ok(format!("{cases} grid cases match"))
}

fn feasibility_sweep() -> Outcome {
    let mut rng = stream(7, "acceptance-feasibility", 0);
    let mut bad = 0;
    for _ in 0..100_000 {
        let c = rng.random_range(1.0..200.0);
        let l = if rng.random::<f64>() < 0.1 { c } else { rng.random_range(0.0..=c) };
        let b = rng.random_range(0.0..2.0 * c);
        let a = rng.random_range(0.0..2.0 * c);
        let p = project(l, b, a, cap(c)).map_err(|e| e.to_string())?;
        if !(0.0..=c).contains(&p.l_phys) || p.e_phys < 0.0 {
            bad += 1;
        }
    }
    let mut bad_fuse = 0;
    for _ in 0..10_000 {
        let c = rng.random_range(1.0..200.0);
        let l = rng.random_range(0.0..=c);
        let y = rng.random_range(-c..3.0 * c);
        let alpha = rng.random_range(0.0..=1.0);
        let f = fuse(l, Some(y), alpha, cap(c)).map_err(|e| e.to_string())?;
        if !(0.0..=c).contains(&f) {
            bad_fuse += 1;
        }
    }
    ensure(bad + bad_fuse == 0, format!("{bad} projection and {bad_fuse} fusion violations"))
}

fn trust_closed_form() -> Outcome {
    let p = TrustParams::default();
    if trust_weight(false, 3.0, 2.0, &p) != 1.0 {
        return Err("alpha without anchor is not 1".into());
    }
    if trust_weight(true, 0.0, 0.0, &p) != 0.5 {
        return Err("alpha at d = e = 0 is not 0.5".into());
    }
    let grid: Vec<Vec<f64>> =
        (0..50).map(|i| (0..50).map(|j| trust_weight(true, i as f64, j as f64 * 0.5, &p)).collect()).collect();
    for i in 0..50 {
        for j in 0..50 {
            if i + 1 < 50 && grid[i + 1][j] <= grid[i][j] {
                return Err(format!("not increasing in d at ({i}, {j})"));
            }
            if j + 1 < 50 && grid[i][j + 1] <= grid[i][j] {
                return Err(format!("not increasing in e at ({i}, {j})"));
            }
        }
    }
    Ok("alpha(v=0)=1, alpha(0,0)=0.5, strictly increasing on 50x50".into())
}

fn truth_replay(trips: &[Trip], capacity: Capacity) -> Outcome {
    let trust = TrustParams::default();
    let mut stops = 0;
    for t in trips {
        let flows: Vec<FlowProposal> = t
            .events
            .iter()
            .map(|e| FlowProposal { board: f64::from(e.mc_board), alight: f64::from(e.mc_alight) })
            .collect();
        let anchors = vec![None; t.len()];
        for mode in [FusionMode::RuleFusion, FusionMode::PhysOnly, FusionMode::FixedFusion] {
            let tr = run_proposals(&t.trip_id, &flows, &anchors, &trust, capacity, mode).map_err(|e| e.to_string())?;
            if tr.l_final != t.mc_load() {
                return Err(format!("trip {} diverges from the manual count", t.trip_id));
            }
            if tr.steps.iter().any(|s| s.e_phys > RESIDUAL_EPS) {
                return Err(format!("trip {} has a non-zero residual", t.trip_id));
            }
        }
        stops += t.len();
    }
    Ok(format!("{} trips, {stops} stops replayed exactly, e_phys rate 0", trips.len()))
}

fn seed_mean(r: &RunReport, subset: Subset, v: Variant, m: Metric, seed: Option<u64>) -> f64 {
    let xs = r.fold_values(subset, v, m, seed);
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn drift_ordering(r: &RunReport, seeds: &[u64]) -> Outcome {
    let mut parts = vec![];
    let mut ok = true;
    for &s in seeds {
        let prop = seed_mean(r, Subset::All, Variant::Proposed, Metric::Rmse, Some(s));
        let perc = seed_mean(r, Subset::All, Variant::PerceptionOnly, Metric::Rmse, Some(s));
        let phys = seed_mean(r, Subset::All, Variant::PhysOnly, Metric::Rmse, Some(s));
        ok &= perc > 1.5 * prop && phys > 1.2 * prop;
        parts.push(format!("seed {s}: perception {:.2}x, phys {:.2}x", perc / prop, phys / prop));
    }
    ensure(ok, parts.join("; "))
}

fn residual_reduction(r: &RunReport) -> Outcome {
    let prop = seed_mean(r, Subset::All, Variant::Proposed, Metric::EphysRate, None);
    let phys = seed_mean(r, Subset::All, Variant::PhysOnly, Metric::EphysRate, None);
    ensure(prop < 0.5 * phys, format!("e_phys rate proposed {:.2}% vs phys-only {:.2}%", prop * 100.0, phys * 100.0))
}

fn reweight_diagnostic(r: &RunReport, seeds: &[u64]) -> Outcome {
    let mut parts = vec![];
    let mut ok = true;
    for &s in seeds {
        let with = seed_mean(r, Subset::All, Variant::Proposed, Metric::ShadowInfeasibility, Some(s));
        let without = seed_mean(r, Subset::All, Variant::NoReweight, Metric::ShadowInfeasibility, Some(s));
        ok &= with <= without;
        parts.push(format!("seed {s}: {:.2}% vs {:.2}%", with * 100.0, without * 100.0));
    }
    ensure(ok, parts.join("; "))
}

fn stress_ordering(r: &RunReport) -> Outcome {
    if r.stress_folds == 0 {
        return Err("no fold has enough APC-bad trips".into());
    }
    let rule = r.summary(Subset::ApcBad, Variant::Proposed).unwrap().get(Metric::Rmse).mean;
    let fixed = r.summary(Subset::ApcBad, Variant::FixedFusion).unwrap().get(Metric::Rmse).mean;
    ensure(rule <= fixed, format!("APC-bad RMSE rule {rule:.3} vs fixed {fixed:.3} over {} folds", r.stress_folds))
}

fn shift_probe(base: &Config) -> Outcome {
    let rate = |cold: f64| -> Result<(f64, f64), String> {
        let mut cfg = base.clone();
        cfg.synth.apc.cold_start_prob = cold;
        cfg.evaluation.variants = vec![Variant::ShiftProbe, Variant::Proposed];
        cfg.evaluation.abm_audit = false;
        let corpus = generate_corpus(&cfg.synth).map_err(|e| e.to_string())?;
        let r = run_ablation_matrix(&corpus.trips, Some(&corpus.poi), &cfg).map_err(|e| e.to_string())?;
        Ok((
            seed_mean(&r, Subset::All, Variant::ShiftProbe, Metric::ShiftRate, None),
            seed_mean(&r, Subset::All, Variant::Proposed, Metric::ShiftRate, None),
        ))
    };
    let (probe_cold, prop_cold) = rate(0.3)?;
    let (probe_clean, _) = rate(0.0)?;
    ensure(
        probe_cold > 0.0 && prop_cold == 0.0 && probe_clean < 0.05,
        format!(
            "cold-start 30%: probe {:.2}%, proposed {:.2}%; offset-free: probe {:.2}%",
            probe_cold * 100.0,
            prop_cold * 100.0,
            probe_clean * 100.0
        ),
    )
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() < 2 { 0.0 } else { xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0) };
    (m, var.sqrt())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn cv_protocol(trips: &[Trip], poi: &paxload::ingest::PoiTable, cfg: &Config, r: &RunReport) -> Outcome {
    let all: BTreeSet<String> = trips.iter().map(|t| t.trip_id.clone()).collect();
    if all.len() != trips.len() {
        return Err("trip ids are not unique".into());
    }
    let ids: Vec<String> = trips.iter().map(|t| t.trip_id.clone()).collect();
    let plan = make_splits(&ids, &cfg.evaluation.seeds, cfg.evaluation.folds).map_err(|e| e.to_string())?;
    for &seed in &cfg.evaluation.seeds {
        let folds: Vec<_> = plan.folds.iter().filter(|f| f.seed == seed).collect();
        let mut seen = BTreeSet::new();
        for f in &folds {
            let train: BTreeSet<&String> = f.train.iter().collect();
            let test: BTreeSet<&String> = f.test.iter().collect();
            if !train.is_disjoint(&test) || train.len() + test.len() != all.len() {
                return Err(format!("seed {seed} fold {}: train and test overlap or miss trips", f.index));
            }
            for id in &f.test {
                if !seen.insert(id.clone()) {
                    return Err(format!("seed {seed}: trip {id} tested twice"));
                }
            }
        }
        if seen != all {
            return Err(format!("seed {seed}: test folds do not cover the corpus"));
        }
    }

    // Perturbing the test side must not change anything that was fitted.
    let fold = &plan.folds[0];
    let base = FittedArtifacts::fit_fold(trips, Some(poi), fold, cfg, Exec::default()).map_err(|e| e.to_string())?;
    let test: BTreeSet<&str> = fold.test.iter().map(String::as_str).collect();
    let mut perturbed = trips.to_vec();
    for t in perturbed.iter_mut().filter(|t| test.contains(t.trip_id.as_str())) {
        for e in &mut t.events {
            e.apc_board_raw += 13;
            e.mc_alight = e.mc_alight.saturating_sub(1);
            e.wifi_count = e.wifi_count.map(|w| w * 3);
            e.hour_bin = (e.hour_bin + 5) % 24;
        }
    }
    let other =
        FittedArtifacts::fit_fold(&perturbed, Some(poi), fold, cfg, Exec::default()).map_err(|e| e.to_string())?;
    if base.fingerprint() != other.fingerprint() {
        return Err("fitted artifacts depend on test trips".into());
    }
    let leaked: Vec<&Trip> = trips.iter().filter(|t| t.trip_id == fold.train[0]).collect();
    if base.check_disjoint(&leaked).is_ok() {
        return Err("leakage guard accepted a training trip".into());
    }

    // Recompute every headline cell from the per-trip records.
    let mut cells = 0;
    for subset in [Subset::All, Subset::ApcBad] {
        for &v in &r.variants {
            let mut per_fold: Vec<Vec<f64>> = vec![];
            for f in &r.folds {
                let bad: BTreeSet<&str> = f.bad_trips.iter().map(String::as_str).collect();
                if subset == Subset::ApcBad && bad.len() < cfg.evaluation.min_bad_trips {
                    continue;
                }
                let rows: Vec<_> = f
                    .trips
                    .iter()
                    .filter(|t| t.variant == v && (subset == Subset::All || bad.contains(t.trip_id.as_str())))
                    .collect();
                per_fold.push(
                    Metric::ALL
                        .iter()
                        .map(|&m| rows.iter().map(|t| m.of_trip(t)).sum::<f64>() / rows.len() as f64)
                        .collect(),
                );
            }
            let s = r.summary(subset, v).ok_or("missing summary row")?;
            if s.n_folds != per_fold.len() {
                return Err(format!("{v}: {} folds summarized, {} expected", s.n_folds, per_fold.len()));
            }
            if per_fold.is_empty() {
                continue;
            }
            for (i, m) in Metric::ALL.into_iter().enumerate() {
                let (mean, std) = mean_std(&per_fold.iter().map(|f| f[i]).collect::<Vec<_>>());
                let got = s.get(m);
                if !close(got.mean, mean) || !close(got.std, std) {
                    return Err(format!("{v} {}: {:?} vs recomputed ({mean}, {std})", m.name(), got));
                }
                cells += 1;
            }
        }
    }
    Ok(format!("{} folds partitioned, test perturbation leaves artifacts unchanged, {cells} cells match", plan.folds.len()))
}

fn abm_self_consistency(trips: &[Trip], poi: &paxload::ingest::PoiTable, cfg: &Config) -> Outcome {
    let capacity = cfg.capacity().map_err(|e| e.to_string())?;
    let refs: Vec<&Trip> = trips.iter().collect();
    let mut fit_cfg = cfg.clone();
    fit_cfg.evaluation.abm_audit = true;
    let art = FittedArtifacts::fit(&refs, Some(poi), &fit_cfg, fold_tag(0, 0), Exec::default()).map_err(|e| e.to_string())?;
    let rates_model = art.abm.as_ref().ok_or("no ABM rates")?;
    let mut inside = 0;
    let mut total = 0;
    let mut rates_of = vec![];
    for (i, t) in trips.iter().take(200).enumerate() {
        let labels = art.labels_for(t, Some(poi)).map_err(|e| e.to_string())?;
        let rates = rates_model.stop_rates(t, &labels).map_err(|e| e.to_string())?;
        let path = simulate(&rates, 1, 1_000_000 + i as u64, capacity).map_err(|e| e.to_string())?.paths.remove(0);
        let params = AbmParams { seed: i as u64, ..cfg.abm };
        let rep = audit(&t.trip_id, &path, &rates, &params, capacity, Exec::default()).map_err(|e| e.to_string())?;
        inside += rep.stops.iter().filter(|s| s.inside).count();
        total += rep.stops.len();
        rates_of.push(rates);
    }
    let coverage = inside as f64 / total as f64;
    if coverage < 0.85 {
        return Err(format!("coverage {coverage:.3} over {total} stops"));
    }

    let n = 200_000;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for (i, rates) in rates_of.iter().take(5).enumerate() {
        let m = simulate(rates, n, 5000 + i as u64, capacity).map_err(|e| e.to_string())?;
        let mut analytic = 0.0;
        for (k, &(lambda, p)) in rates.iter().enumerate() {
            analytic = analytic * (1.0 - p) + lambda;
            let col = m.stop(k);
            let (mean, sd) = mean_std(&col);
            let se = sd / (n as f64).sqrt();
            let z = if se > 0.0 { (mean - analytic).abs() / se } else { (mean - analytic).abs() * f64::INFINITY };
            worst = worst.max(z);
            checked += 1;
        }
    }
    ensure(worst <= 3.0, format!("coverage {coverage:.3} over {total} stops; {checked} stop means, max |z| {worst:.2}"))
}

/// Exact W1 between two equal-size empirical measures by trying every
/// assignment.
fn w1_brute(xs: &[f64], ys: &[f64]) -> f64 {
    fn perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = vec![];
        for p in perms(n - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }
    perms(xs.len())
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| (xs[i] - ys[j]).abs()).sum::<f64>() / xs.len() as f64)
        .fold(f64::INFINITY, f64::min)
}

fn w1_cdf(xs: &[f64], point: f64) -> f64 {
    let mut knots: Vec<f64> = xs.iter().copied().chain([point]).collect();
    knots.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    knots
        .windows(2)
        .map(|w| {
            let f = xs.iter().filter(|&&x| x <= w[0]).count() as f64 / n;
            let g = if point <= w[0] { 1.0 } else { 0.0 };
            (f - g).abs() * (w[1] - w[0])
        })
        .sum()
}

fn w1_oracle() -> Outcome {
    let atoms = [0.0, 1.0, 2.5, 4.0, 7.0, 10.0];
    let points = [0.0, 0.5, 1.0, 2.5, 3.0, 6.0, 10.0, 12.0];
    let mut cases = 0;
    for &a in &atoms {
        for &b in &atoms {
            for &c in &atoms {
                for &p in &points {
                    let xs = [a, b, c];
                    let got = w1_point_mass(&xs, p).map_err(|e| e.to_string())?;
                    let brute = w1_brute(&xs, &[p; 3]);
                    let cdf = w1_cdf(&xs, p);
                    if (got - brute).abs() > 1e-12 || (got - cdf).abs() > 1e-12 {
                        return Err(format!("{xs:?} vs {p}: {got} brute {brute} cdf {cdf}"));
                    }
                    cases += 1;
                }
            }
        }
    }
    Ok(format!("{cases} three-atom cases match assignment and CDF forms"))
}

fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_paxload");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
        }
    };
    let p = |name: &str| dir.path().join(name).display().to_string();
    run(&["synth", "--set", "synth.n_trips=60", "--out", &p("corpus.csv"), "--poi-out", &p("poi.csv")])?;
    let runs = [("1", "a"), ("1", "b"), ("4", "c")];
    for (threads, name) in runs {
        run(&["--threads", threads, "eval", "--corpus", &p("corpus.csv"), "--poi", &p("poi.csv"), "--out", &p(name)])?;
    }
    let read = |run: &str, file: &str| std::fs::read(Path::new(&p(run)).join(file)).map_err(|e| e.to_string());
    for file in OUTPUT_FILES {
        let a = read("a", file)?;
        for other in ["b", "c"] {
            if read(other, file)? != a {
                return Err(format!("{file} differs between runs a and {other}"));
            }
        }
    }
    Ok(format!("{} output files byte-identical across 3 runs (1, 1, 4 threads)", OUTPUT_FILES.len()))
}

fn main() {
    let cfg = Config::default();
    let capacity = cfg.capacity().unwrap();
    let corpus = generate_corpus(&cfg.synth).expect("default corpus");
    let report = run_ablation_matrix(&corpus.trips, Some(&corpus.poi), &cfg).expect("ablation matrix");
    let seeds = cfg.evaluation.seeds.clone();

    let checks: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("projection oracle", Box::new(projection_oracle)),
        ("feasibility sweep", Box::new(feasibility_sweep)),
        ("trust closed form", Box::new(trust_closed_form)),
        ("truth recovery", Box::new(|| truth_replay(&corpus.trips, capacity))),
        ("drift ordering", Box::new(|| drift_ordering(&report, &seeds))),
        ("residual reduction", Box::new(|| residual_reduction(&report))),
        ("reweighting diagnostic", Box::new(|| reweight_diagnostic(&report, &seeds))),
        ("stress robustness", Box::new(|| stress_ordering(&report))),
        ("shift probe", Box::new(|| shift_probe(&cfg))),
        ("cv protocol", Box::new(|| cv_protocol(&corpus.trips, &corpus.poi, &cfg, &report))),
        ("abm self-consistency", Box::new(|| abm_self_consistency(&corpus.trips, &corpus.poi, &cfg))),
        ("w1 oracle", Box::new(w1_oracle)),
        ("determinism", Box::new(cli_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
