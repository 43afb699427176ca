//! Runs the full ablation matrix on a generated corpus and prints both
//! tables. Usage: `cargo run --release --example ablation [config.toml]`.

use std::path::Path;
use std::time::Instant;

use paxload::eval::{format_table, run_ablation_matrix, Subset};
use paxload::synth::generate_corpus;
use paxload::Config;

fn main() -> paxload::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => Config::load(Path::new(&p))?,
        None => Config::default(),
    };
    let corpus = generate_corpus(&cfg.synth)?;
    let start = Instant::now();
    let report = run_ablation_matrix(&corpus.trips, Some(&corpus.poi), &cfg)?;
    println!("{}", format_table(&report, Subset::All));
    println!("{}", format_table(&report, Subset::ApcBad));
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
