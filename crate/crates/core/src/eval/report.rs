use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::eval::run::{Metric, RunReport, Subset, TripRecord};
use crate::eval::Variant;
use crate::model::{Trajectory, Trip};

/// Files written by [`write_outputs`].
pub const OUTPUT_FILES: [&str; 7] =
    ["report.txt", "run_all.csv", "run_stress.csv", "folds.csv", "trips.csv", "traces.csv", "config.toml"];

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

const TABLE_METRICS: [(Metric, &str, f64); 6] = [
    (Metric::Rmse, "RMSE", 1.0),
    (Metric::Mae, "MAE", 1.0),
    (Metric::EndAe, "Trip-end AE", 1.0),
    (Metric::ShadowInfeasibility, "Shadow infeas. %", 100.0),
    (Metric::EphysRate, "e_phys rate %", 100.0),
    (Metric::ShiftRate, "Shift rate %", 100.0),
];

/// Aligned-column table, one row per variant, cells `mean ± std`.
pub fn format_table(report: &RunReport, subset: Subset) -> String {
    let rows = match subset {
        Subset::All => &report.all,
        Subset::ApcBad => &report.stress,
    };
    let n_folds = rows.first().map_or(0, |r| r.n_folds);
    let title = match subset {
        Subset::All => format!("All trips (mean ± std across {n_folds} folds)"),
        Subset::ApcBad => format!("APC-bad trips (mean ± std across {n_folds} folds with enough bad trips)"),
    };
    let mut cells: Vec<Vec<String>> = vec![std::iter::once("Method".to_string())
        .chain(TABLE_METRICS.iter().map(|(_, h, _)| h.to_string()))
        .collect()];
    for r in rows {
        let mut line = vec![r.variant.label().to_string()];
        for &(m, _, scale) in &TABLE_METRICS {
            let s = r.get(m);
            line.push(if r.n_folds == 0 { "n/a".into() } else { format!("{:.2} ± {:.2}", s.mean * scale, s.std * scale) });
        }
        cells.push(line);
    }
    let widths: Vec<usize> =
        (0..cells[0].len()).map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = format!("{title}\n");
    for row in &cells {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            let pad = widths[c] - cell.chars().count();
            if c == 0 {
                let _ = write!(line, "{cell}{}", " ".repeat(pad));
            } else {
                let _ = write!(line, "  {}{cell}", " ".repeat(pad));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn write_summary(path: &Path, report: &RunReport, subset: Subset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["variant".to_string(), "n_folds".to_string()];
    for m in Metric::ALL {
        header.push(format!("{}_mean", m.name()));
        header.push(format!("{}_std", m.name()));
    }
    w.write_record(&header).map_err(csv_err)?;
    let rows = match subset {
        Subset::All => &report.all,
        Subset::ApcBad => &report.stress,
    };
    for r in rows {
        let mut rec = vec![r.variant.name().to_string(), r.n_folds.to_string()];
        for m in Metric::ALL {
            let s = r.get(m);
            rec.push(s.mean.to_string());
            rec.push(s.std.to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_folds(path: &Path, report: &RunReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> =
        ["seed", "fold", "subset", "variant", "n_train", "n_test", "n_bad", "tau_bad", "n_trips"].map(String::from).to_vec();
    header.extend(Metric::ALL.iter().map(|m| m.name().to_string()));
    header.push("fingerprint".into());
    w.write_record(&header).map_err(csv_err)?;
    for f in &report.folds {
        for (subset, rows) in [("all", Some(&f.all)), ("apc_bad", f.stress.as_ref())] {
            for m in rows.into_iter().flatten() {
                let mut rec = vec![
                    f.seed.to_string(),
                    f.index.to_string(),
                    subset.to_string(),
                    m.variant.name().to_string(),
                    f.n_train.to_string(),
                    f.n_test.to_string(),
                    f.bad_trips.len().to_string(),
                    f.tau_bad.to_string(),
                    m.n_trips.to_string(),
                ];
                rec.extend(Metric::ALL.iter().map(|k| k.of(m).to_string()));
                rec.push(f.fingerprint.clone());
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_trip_records(path: &Path, report: &RunReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in report.folds.iter().flat_map(|f| &f.trips) {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trip_records(path: &Path) -> Result<Vec<TripRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .enumerate()
        .map(|(i, rec)| {
            rec.map_err(|e| Error::Parse { path: path.display().to_string(), line: i + 2, message: e.to_string() })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-stop traces. `keys[i]` labels `trajectories[i]` with its seed, fold
/// and variant; `truth` maps trip ids to ground-truth loads.
pub fn write_traces<W: Write>(
    w: W,
    items: &[(u64, usize, Variant, &Trajectory)],
    truth: &BTreeMap<&str, Vec<f64>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record([
        "seed", "fold", "variant", "trip_id", "stop_index", "b_hat", "a_hat", "a_star", "b_star", "l_phys", "e_phys",
        "y_load", "disagreement", "alpha", "l_fused", "l_final", "shadow", "mc_load",
    ])
    .map_err(csv_err)?;
    for &(seed, fold, variant, tr) in items {
        let mc = truth.get(tr.trip_id.as_str());
        for (k, s) in tr.steps.iter().enumerate() {
            w.write_record([
                seed.to_string(),
                fold.to_string(),
                variant.name().to_string(),
                tr.trip_id.clone(),
                k.to_string(),
                s.b_hat.to_string(),
                s.a_hat.to_string(),
                s.a_star.to_string(),
                s.b_star.to_string(),
                s.l_phys.to_string(),
                s.e_phys.to_string(),
                opt(s.y_load),
                opt(s.disagreement),
                opt(s.alpha),
                s.l_fused.to_string(),
                tr.l_final[k].to_string(),
                tr.shadow[k].to_string(),
                opt(mc.map(|m| m[k])),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes tables, fold and trip records, per-stop traces and the resolved
/// config into `dir`.
pub fn write_outputs(report: &RunReport, trips: &[Trip], cfg: &Config, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = format_table(report, Subset::All);
    text.push('\n');
    text.push_str(&format_table(report, Subset::ApcBad));
    fs::write(dir.join("report.txt"), text)?;
    write_summary(&dir.join("run_all.csv"), report, Subset::All)?;
    write_summary(&dir.join("run_stress.csv"), report, Subset::ApcBad)?;
    write_folds(&dir.join("folds.csv"), report)?;
    write_trip_records(&dir.join("trips.csv"), report)?;
    let truth: BTreeMap<&str, Vec<f64>> = trips.iter().map(|t| (t.trip_id.as_str(), t.mc_load())).collect();
    let items: Vec<(u64, usize, Variant, &Trajectory)> =
        report.folds.iter().flat_map(|f| f.trajectories.iter().map(move |(v, t)| (f.seed, f.index, *v, t))).collect();
    let file = std::io::BufWriter::new(fs::File::create(dir.join("traces.csv"))?);
    write_traces(file, &items, &truth)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(())
}
