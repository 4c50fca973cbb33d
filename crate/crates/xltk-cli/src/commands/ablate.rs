//! `xltk ablate`: train every configured variant under the identical seed,
//! config, and splits, score each on the test split, and write a comparison
//! CSV (macro F1, delta against the full model, trainable parameters).

use super::{csv_writer, ensure_dir};
use crate::config::Settings;
use crate::error::CliError;
use crate::pipeline::{build_model, load_corpus, prepare};
use xltk_core::model::Variant;
use xltk_core::train::{evaluate_model, train, TrainHooks};

/// The config vocabulary spells variants with underscores.
fn config_name(v: Variant) -> String {
    v.name().replace('-', "_")
}

pub fn run(s: &Settings) -> Result<(), CliError> {
    let corpus = load_corpus(s)?;
    let prep = prepare(s, &corpus)?;

    let mut rows: Vec<(Variant, f64, usize)> = Vec::new();
    for &variant in &s.ablate_variants {
        let mut model = build_model(s, &prep, variant)?;
        let report = train(&mut model, &prep.train, &prep.valid, &s.train, TrainHooks::default())?;
        let metrics = evaluate_model(&model, &prep.test, s.train.batch_size, s.train.threshold)?;
        let (trainable, _) = model.count_parameters();
        println!(
            "{:<16} best epoch {:>3}  val macro F1 {:.4}  test macro F1 {:.4}",
            config_name(variant),
            report.best_epoch,
            report.best_val_macro_f1,
            metrics.macro_f1
        );
        rows.push((variant, metrics.macro_f1, trainable));
    }

    // Deltas are against the full model when it ran, else the first row.
    let base = rows
        .iter()
        .find(|r| r.0 == Variant::Full)
        .map(|r| r.1)
        .unwrap_or(rows[0].1);

    ensure_dir(&s.out_dir)?;
    let path = s.out_dir.join("ablation.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["variant", "macro_f1", "delta_f1", "trainable_params"])?;
    for &(variant, f1, params) in &rows {
        w.write_record([
            config_name(variant),
            f1.to_string(),
            (f1 - base).to_string(),
            params.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    println!("wrote {}", path.display());
    Ok(())
}
