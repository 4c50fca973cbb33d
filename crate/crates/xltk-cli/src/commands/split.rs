//! `xltk split`: materialize the stratified train/valid/test partition as
//! three CSV files. With `--synthetic N` the corpus itself is generated
//! first (seeded, imbalanced, with planted category markers) and written to
//! out_dir/synthetic.csv, so the whole pipeline runs without external data.

use super::ensure_dir;
use crate::config::Settings;
use crate::error::CliError;
use crate::pipeline::{load_corpus, split_spec};
use xltk_core::data::{stratified_split, write_csv, RawComment, LABELS};
use xltk_core::synth::{generate, SynthConfig};

pub fn run(s: &Settings, synthetic: Option<usize>) -> Result<(), CliError> {
    ensure_dir(&s.out_dir)?;
    let corpus = match synthetic {
        Some(n) => {
            let cfg = SynthConfig { n, seed: s.seed, ..SynthConfig::default() };
            let rows = generate(&cfg);
            let path = s.out_dir.join("synthetic.csv");
            write_csv(&path, &rows)?;
            println!("generated {} synthetic comments -> {}", rows.len(), path.display());
            rows
        }
        None => load_corpus(s)?,
    };

    let splits = stratified_split(&corpus, &split_spec(s))?;
    for (name, idx) in [("train", &splits.train), ("valid", &splits.valid), ("test", &splits.test)] {
        let rows: Vec<RawComment> = idx.iter().map(|&i| corpus[i].clone()).collect();
        let path = s.out_dir.join(format!("{name}.csv"));
        write_csv(&path, &rows)?;
        let positives: Vec<String> = (0..LABELS.len())
            .map(|k| {
                let c = rows.iter().filter(|r| r.labels[k] == 1).count();
                format!("{} {c}", LABELS[k])
            })
            .collect();
        println!("{name}: {} rows ({}) -> {}", rows.len(), positives.join(", "), path.display());
    }
    Ok(())
}
