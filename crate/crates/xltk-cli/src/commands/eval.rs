//! `xltk eval`: score a trained checkpoint on the test split of `data`,
//! with bootstrap confidence intervals on the headline metrics. The split is
//! re-derived from the configured seed and fractions, so evaluating with the
//! training run's config scores exactly the held-out samples.

use super::{ensure_dir, print_metrics_table, write_metrics_csv};
use crate::config::Settings;
use crate::error::CliError;
use crate::pipeline::{load_corpus, split_spec};
use std::path::Path;
use xltk_core::data::{encode, stratified_split, Vocabulary};
use xltk_core::metrics::{bootstrap_ci, evaluate};
use xltk_core::model::Model;
use xltk_core::train::predict;

/// Load the model plus the vocabulary files sitting beside its checkpoint.
pub fn load_model_set(ckpt: &Path) -> Result<(Model, Vocabulary, Vocabulary), CliError> {
    let model = Model::load(ckpt)?;
    let dir = ckpt.parent().unwrap_or_else(|| Path::new("."));
    let words = Vocabulary::load(&dir.join("words.vocab"))?;
    let chars = Vocabulary::load(&dir.join("chars.vocab"))?;
    if words.len() != model.config.word_vocab || chars.len() != model.config.char_vocab {
        return Err(CliError::Usage(format!(
            "vocabulary files beside {} disagree with the checkpoint: {} words / {} chars on disk, {} / {} in the model",
            ckpt.display(),
            words.len(),
            chars.len(),
            model.config.word_vocab,
            model.config.char_vocab
        )));
    }
    Ok((model, words, chars))
}

pub fn run(s: &Settings) -> Result<(), CliError> {
    let ckpt = s.checkpoint_path();
    let (model, words, chars) = load_model_set(&ckpt)?;

    let corpus = load_corpus(s)?;
    let splits = stratified_split(&corpus, &split_spec(s))?;
    let test: Vec<_> = splits
        .test
        .iter()
        .map(|&i| encode(&corpus[i], &words, &chars, model.config.t_max, model.config.t_char))
        .collect();

    let (pred, gold) = predict(&model, &test, s.train.batch_size, s.train.threshold)?;
    let report = evaluate(&pred, &gold);
    let cis = [
        ("macro_f1", bootstrap_ci(&pred, &gold, s.bootstrap, s.seed, |p, g| evaluate(p, g).macro_f1)),
        ("micro_f1", bootstrap_ci(&pred, &gold, s.bootstrap, s.seed, |p, g| evaluate(p, g).micro_f1)),
        ("exact_match", bootstrap_ci(&pred, &gold, s.bootstrap, s.seed, |p, g| evaluate(p, g).exact_match)),
    ];

    println!("checkpoint {} on {} test samples", ckpt.display(), test.len());
    print_metrics_table(&report, &cis);
    ensure_dir(&s.out_dir)?;
    let out = s.out_dir.join("eval.csv");
    write_metrics_csv(&out, &report, &cis)?;
    println!("\nwrote {}", out.display());
    Ok(())
}
