//! `xltk embed-stats`: the redundancy diagnostic across the three embedding
//! sources. Pools each training comment per source, correlates the leading
//! principal scores, and emits the 3x3 matrix as CSV.

use super::{csv_writer, ensure_dir};
use crate::config::Settings;
use crate::error::CliError;
use crate::pipeline::{load_corpus, prepare};
use xltk_core::embed::{load_table, random_table, source_correlation};

const SOURCES: [&str; 3] = ["source_a", "source_b", "source_c"];

pub fn run(s: &Settings) -> Result<(), CliError> {
    let corpus = load_corpus(s)?;
    let prep = prepare(s, &corpus)?;

    let dims = [s.dim_a, s.dim_b, s.dim_c];
    let mut tables: Vec<Vec<f64>> = Vec::with_capacity(3);
    for i in 0..3 {
        let table = match &s.embeddings[i] {
            Some(path) => load_table(path, &prep.words, dims[i], s.seed, i as u64)?,
            None => random_table(prep.words.len(), dims[i], s.seed, i as u64),
        };
        tables.push(table);
    }

    let report = source_correlation(
        &prep.train,
        [
            (tables[0].as_slice(), dims[0]),
            (tables[1].as_slice(), dims[1]),
            (tables[2].as_slice(), dims[2]),
        ],
    );

    ensure_dir(&s.out_dir)?;
    let path = s.out_dir.join("embed_stats.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["", SOURCES[0], SOURCES[1], SOURCES[2]])?;
    println!("{:<10} {:>10} {:>10} {:>10}", "", SOURCES[0], SOURCES[1], SOURCES[2]);
    for i in 0..3 {
        let row = report.matrix[i];
        w.write_record([
            SOURCES[i].to_string(),
            row[0].to_string(),
            row[1].to_string(),
            row[2].to_string(),
        ])?;
        println!(
            "{:<10} {:>10.4} {:>10.4} {:>10.4}",
            SOURCES[i], row[0], row[1], row[2]
        );
    }
    w.flush().map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;

    for (i, &d) in report.degenerate.iter().enumerate() {
        if d {
            println!("note: {} has zero variance; its correlations are undefined", SOURCES[i]);
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}
