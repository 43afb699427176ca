use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use paxload::abm::audit;
use paxload::corpus::{read_corpus, write_corpus};
use paxload::engine::run_trip;
use paxload::eval::{
    read_trip_records, run_ablation_matrix, select_cases, write_outputs, CaseCriterion, FittedArtifacts, Variant,
};
use paxload::ingest::{fit_anchor_map, PoiTable};
use paxload::rng::{derive_seed, key_of};
use paxload::synth::generate_corpus;
use paxload::{Config, Error, Exec, Trip};

#[derive(Parser)]
#[command(name = "paxload", version, about = "Closed-loop passenger-load estimation harness")]
struct Cli {
    /// Worker threads for data-parallel loops; defaults to available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override one setting, e.g. `--set trust.s_d=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and print its summary tables.
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the POI density table for all buffer radii.
        #[arg(long)]
        poi_out: Option<PathBuf>,
    },
    /// Run the cross-validated ablation matrix and write reports.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        poi: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of variants.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<Variant>,
    },
    /// Fit on every other trip, run the proposed pipeline on one trip and
    /// write its ABM envelope.
    Audit {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        poi: Option<PathBuf>,
        #[arg(long)]
        trip: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank held-out trips of a finished run and export their traces.
    Cases {
        /// Output directory of a previous `eval`.
        #[arg(long)]
        run: PathBuf,
        /// rmse, cum_ephys or gating_freq.
        #[arg(long)]
        criterion: CaseCriterion,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value = "proposed")]
        variant: Variant,
        /// Defaults to `<run>/cases_<criterion>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failure with its exit code: 2 for bad input, 1 for internal faults.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: if e.is_user_error() { 2 } else { 1 }, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

fn user(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn csv_failure(e: csv::Error) -> Failure {
    Failure { code: 1, message: e.to_string() }
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn load_config(args: &ConfigArgs) -> Result<Config, Failure> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).map_err(|e| user(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut table: toml::Table = text.parse().map_err(|e| user(format!("invalid config: {e}")))?;
    for o in &args.overrides {
        let (key, raw) = o.split_once('=').ok_or_else(|| user(format!("override {o:?} is not KEY=VALUE")))?;
        let parts: Vec<&str> = key.trim().split('.').collect();
        let mut node = &mut table;
        for p in &parts[..parts.len() - 1] {
            node = node
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| user(format!("override {key:?}: {p:?} is not a section")))?;
        }
        node.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    }
    Ok(Config::from_toml(&table.to_string())?)
}

fn load_corpus(path: &Path) -> Result<Vec<Trip>, Failure> {
    let f = File::open(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
    Ok(read_corpus(BufReader::new(f), &path.display().to_string())?)
}

fn load_poi(path: Option<&Path>) -> Result<Option<PoiTable>, Failure> {
    path.map(|p| {
        let f = File::open(p).map_err(|e| user(format!("{}: {e}", p.display())))?;
        Ok(PoiTable::read_csv(BufReader::new(f), &p.display().to_string())?)
    })
    .transpose()
}

fn cmd_synth(args: &ConfigArgs, out: &Path, poi_out: Option<&Path>) -> Result<(), Failure> {
    let cfg = load_config(args)?;
    let corpus = generate_corpus(&cfg.synth)?;
    write_corpus(BufWriter::new(File::create(out)?), &corpus.trips)?;
    if let Some(p) = poi_out {
        corpus.poi.write_csv(BufWriter::new(File::create(p)?))?;
    }

    let stdout = io::stdout();
    let mut w = stdout.lock();
    let stops: usize = corpus.trips.iter().map(Trip::len).sum();
    writeln!(w, "trips,{}\nstop_events,{}\ncold_start_trips,{}\n", corpus.trips.len(), stops, corpus.cold_start_trips.len())?;
    let mut hist = std::collections::BTreeMap::new();
    for t in &corpus.trips {
        *hist.entry(t.len()).or_insert(0usize) += 1;
    }
    writeln!(w, "stops_per_trip,trips")?;
    for (k, n) in hist {
        writeln!(w, "{k},{n}")?;
    }
    let refs: Vec<&Trip> = corpus.trips.iter().collect();
    let map = fit_anchor_map(&refs);
    writeln!(w, "\nhour,true_ratio,fitted_ratio,fallback")?;
    for h in 0..24u8 {
        let fitted = map.ratio(h).map(|r| r.to_string()).unwrap_or_default();
        let fallback = u8::from(map.fallback_hours.contains(&h));
        writeln!(w, "{h},{},{fitted},{fallback}", corpus.device_ratio[h as usize])?;
    }
    Ok(())
}

fn cmd_eval(args: &ConfigArgs, corpus: &Path, poi: Option<&Path>, out: &Path, variants: &[Variant]) -> Result<(), Failure> {
    let mut cfg = load_config(args)?;
    if !variants.is_empty() {
        cfg.evaluation.variants = variants.to_vec();
    }
    let trips = load_corpus(corpus)?;
    let poi = load_poi(poi)?;
    let report = run_ablation_matrix(&trips, poi.as_ref(), &cfg)?;
    write_outputs(&report, &trips, &cfg, out)?;
    print!("{}", fs::read_to_string(out.join("report.txt"))?);
    Ok(())
}

fn cmd_audit(args: &ConfigArgs, corpus: &Path, poi: Option<&Path>, trip_id: &str, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(args)?;
    let trips = load_corpus(corpus)?;
    let poi = load_poi(poi)?;
    let target = trips.iter().find(|t| t.trip_id == trip_id).ok_or_else(|| user(format!("unknown trip id {trip_id:?}")))?;
    let train: Vec<&Trip> = trips.iter().filter(|t| t.trip_id != trip_id).collect();
    let mut cfg_fit = cfg.clone();
    cfg_fit.evaluation.abm_audit = true;
    let tag = key_of(&format!("audit/{trip_id}"));
    let art = FittedArtifacts::fit(&train, poi.as_ref(), &cfg_fit, tag, Exec::default())?;
    let capacity = cfg.capacity()?;
    let contexts = art.context.build(target, poi.as_ref())?;
    let tr = run_trip(target, &contexts, &art.refit, Some(&art.anchor_map), &cfg.trust, capacity, Variant::Proposed.mode())?;
    let rates = art.abm.as_ref().expect("ABM rates fitted").stop_rates(target, &art.labels_for(target, poi.as_ref())?)?;
    let params = paxload::abm::AbmParams { seed: derive_seed(cfg.abm.seed, "abm-audit", tag), ..cfg.abm };
    let report = audit(trip_id, &tr.l_final, &rates, &params, capacity, Exec::default())?;
    report.write_csv(BufWriter::new(File::create(out)?))?;
    println!(
        "trip {trip_id}: coverage {:.3}, shocks {}",
        report.coverage,
        report.stops.iter().filter(|s| s.shock).count()
    );
    Ok(())
}

fn cmd_cases(run: &Path, criterion: CaseCriterion, n: usize, variant: Variant, out: Option<&Path>, name: &str) -> Result<(), Failure> {
    let trips_csv = run.join("trips.csv");
    if !trips_csv.exists() {
        return Err(user(format!("{} not found; run `paxload eval` first", trips_csv.display())));
    }
    let records = read_trip_records(&trips_csv)?;
    let picked = select_cases(&records, criterion, variant, n);
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| run.join(format!("cases_{name}.csv")));
    let mut w = csv::Writer::from_path(&out).map_err(csv_failure)?;
    w.write_record(["rank", "trip_id", "seed", "fold", "variant", "score"]).map_err(csv_failure)?;
    for (i, r) in picked.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            r.trip_id.clone(),
            r.seed.to_string(),
            r.fold.to_string(),
            r.variant.name().to_string(),
            criterion.score(r).to_string(),
        ])
        .map_err(csv_failure)?;
    }
    w.flush()?;

    // Trace rows of the picked (seed, trip) pairs, all variants.
    let traces_path = run.join("traces.csv");
    let trace_out = out.with_extension("traces.csv");
    let mut rd = csv::Reader::from_path(&traces_path).map_err(|e| user(format!("{}: {e}", traces_path.display())))?;
    let mut tw = csv::Writer::from_path(&trace_out).map_err(csv_failure)?;
    tw.write_record(rd.headers().map_err(csv_failure)?).map_err(csv_failure)?;
    let wanted: std::collections::BTreeSet<(String, String)> =
        picked.iter().map(|r| (r.seed.to_string(), r.trip_id.clone())).collect();
    for rec in rd.records() {
        let rec = rec.map_err(csv_failure)?;
        if wanted.contains(&(rec[0].to_string(), rec[3].to_string())) {
            tw.write_record(&rec).map_err(csv_failure)?;
        }
    }
    tw.flush()?;
    println!("{} cases written to {}", picked.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(user("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure { code: 1, message: e.to_string() })?;
    }
    match &cli.command {
        Command::Synth { config, out, poi_out } => cmd_synth(config, out, poi_out.as_deref()),
        Command::Eval { config, corpus, poi, out, variants } => cmd_eval(config, corpus, poi.as_deref(), out, variants),
        Command::Audit { config, corpus, poi, trip, out } => cmd_audit(config, corpus, poi.as_deref(), trip, out),
        Command::Cases { run, criterion, n, variant, out } => {
            let name = match criterion {
                CaseCriterion::Rmse => "rmse",
                CaseCriterion::CumEphys => "cum_ephys",
                CaseCriterion::GatingFreq => "gating_freq",
            };
            cmd_cases(run, *criterion, *n, *variant, out.as_deref(), name)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
