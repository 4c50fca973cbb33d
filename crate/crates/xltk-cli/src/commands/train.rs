//! `xltk train`: fit on the training split, early-stop on validation macro
//! F1, then report on the test split. Artifacts land in `out_dir`:
//! checkpoint.xlck, words.vocab, chars.vocab, train_log.csv, metrics.csv.

use super::{ensure_dir, print_metrics_table, write_metrics_csv};
use crate::config::Settings;
use crate::error::CliError;
use crate::pipeline::{build_model, load_corpus, prepare};
use std::path::Path;
use xltk_core::train::{evaluate_model, train, TrainHooks, TrainReport};

pub fn run(s: &Settings) -> Result<(), CliError> {
    let corpus = load_corpus(s)?;
    let prep = prepare(s, &corpus)?;
    println!(
        "corpus {} = train {} / valid {} / test {}; vocab {} words, {} chars",
        corpus.len(),
        prep.train.len(),
        prep.valid.len(),
        prep.test.len(),
        prep.words.len(),
        prep.chars.len()
    );

    let mut model = build_model(s, &prep, s.variant)?;
    let (trainable, total) = model.count_parameters();
    println!("variant {}: {trainable} trainable / {total} total parameters", s.variant.name());

    let report = train(&mut model, &prep.train, &prep.valid, &s.train, TrainHooks::default())?;
    for e in &report.log {
        println!(
            "epoch {:>3}  loss {:.6}  val macro F1 {:.4}  lr {:.3e}  {} synthetic",
            e.epoch, e.loss, e.val_macro_f1, e.lr, e.synthetic
        );
    }
    println!(
        "best epoch {} (val macro F1 {:.4}){}{}",
        report.best_epoch,
        report.best_val_macro_f1,
        if report.stopped_early { ", stopped early" } else { "" },
        if report.smote_warned { "; oversampler warned: too few minority samples" } else { "" },
    );

    ensure_dir(&s.out_dir)?;
    model.save(&s.out_dir.join("checkpoint.xlck"))?;
    prep.words.save(&s.out_dir.join("words.vocab"))?;
    prep.chars.save(&s.out_dir.join("chars.vocab"))?;
    write_train_log(&s.out_dir.join("train_log.csv"), &report)?;

    let metrics = evaluate_model(&model, &prep.test, s.train.batch_size, s.train.threshold)?;
    write_metrics_csv(&s.out_dir.join("metrics.csv"), &metrics, &[])?;
    println!("\ntest split:");
    print_metrics_table(&metrics, &[]);
    println!("\nartifacts in {}", s.out_dir.display());
    Ok(())
}

fn write_train_log(path: &Path, report: &TrainReport) -> Result<(), CliError> {
    let mut w = super::csv_writer(path)?;
    w.write_record(["epoch", "loss", "val_macro_f1", "lr", "seconds"])?;
    for e in &report.log {
        w.write_record([
            e.epoch.to_string(),
            e.loss.to_string(),
            e.val_macro_f1.to_string(),
            e.lr.to_string(),
            format!("{:.3}", e.seconds),
        ])?;
    }
    w.flush().map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })
}
