//! Shared assembly line: corpus → stratified splits → vocabularies →
//! encoded samples → initialized model. Every subcommand that touches data
//! goes through here so they all agree on the artifacts.

use crate::config::Settings;
use crate::error::CliError;
use std::path::Path;
use xltk_core::data::{
    char_tokens, encode, load_csv, normalize, stratified_split, tokenize, RawComment, SplitSpec,
    TokenizedSample, Vocabulary,
};
use xltk_core::embed::load_table;
use xltk_core::gate::init_reference;
use xltk_core::model::{Model, RepSpace, Variant};

/// Toxic comments pooled when initializing the gate reference vector.
pub const GATE_INIT_CAP: usize = 1000;

pub struct Prepared {
    pub words: Vocabulary,
    pub chars: Vocabulary,
    pub train: Vec<TokenizedSample>,
    pub valid: Vec<TokenizedSample>,
    pub test: Vec<TokenizedSample>,
}

pub fn require_data(s: &Settings) -> Result<&Path, CliError> {
    s.data
        .as_deref()
        .ok_or_else(|| CliError::Usage("no corpus configured; set `data = <csv path>`".into()))
}

pub fn load_corpus(s: &Settings) -> Result<Vec<RawComment>, CliError> {
    Ok(load_csv(require_data(s)?)?)
}

pub fn split_spec(s: &Settings) -> SplitSpec {
    SplitSpec {
        fractions: [1.0 - s.val_frac - s.test_frac, s.val_frac, s.test_frac],
        seed: s.seed,
        min_stratum: s.min_stratum,
    }
}

/// Split, build vocabularies on the training split only, and encode all
/// three splits.
pub fn prepare(s: &Settings, corpus: &[RawComment]) -> Result<Prepared, CliError> {
    let splits = stratified_split(corpus, &split_spec(s))?;
    let pick = |idx: &[usize]| -> Vec<&RawComment> { idx.iter().map(|&i| &corpus[i]).collect() };
    let (train_raw, valid_raw, test_raw) =
        (pick(&splits.train), pick(&splits.valid), pick(&splits.test));

    let normalized: Vec<String> = train_raw.iter().map(|c| normalize(&c.text)).collect();
    let mut word_toks: Vec<String> = Vec::new();
    let mut char_toks: Vec<String> = Vec::new();
    for text in &normalized {
        word_toks.extend(tokenize(text));
        char_toks.extend(char_tokens(text));
    }
    let words = Vocabulary::build(word_toks.iter().map(String::as_str), s.min_freq);
    let chars = Vocabulary::build(char_toks.iter().map(String::as_str), s.char_min_freq);

    let enc = |raw: &[&RawComment]| -> Vec<TokenizedSample> {
        raw.iter()
            .map(|c| encode(c, &words, &chars, s.t_max, s.t_char))
            .collect()
    };
    Ok(Prepared {
        train: enc(&train_raw),
        valid: enc(&valid_raw),
        test: enc(&test_raw),
        words,
        chars,
    })
}

/// Fresh model for the prepared corpus: seeded init, optional pretrained
/// tables, and the gate reference centered on pooled toxic projections.
pub fn build_model(s: &Settings, prep: &Prepared, variant: Variant) -> Result<Model, CliError> {
    let mc = s.model_config(prep.words.len(), prep.chars.len());
    let mut model = Model::init(mc, variant, s.seed)?;

    let dims = [s.dim_a, s.dim_b, s.dim_c];
    let names = ["embed.table_a", "embed.table_b", "embed.table_c"];
    for i in 0..3 {
        let Some(path) = &s.embeddings[i] else { continue };
        if model.params.index_of(names[i]).is_none() {
            continue; // variant dropped this source
        }
        let table = load_table(path, &prep.words, dims[i], s.seed, i as u64)?;
        model.params.get_mut(names[i]).data = table;
    }

    if variant.has_gating() {
        let toxic: Vec<&TokenizedSample> = prep
            .train
            .iter()
            .filter(|t| t.labels.iter().any(|&l| l == 1))
            .collect();
        let pooled = model.comment_representations(&toxic, RepSpace::Projected)?;
        let v = init_reference(&pooled, s.proj_dim, GATE_INIT_CAP, s.seed);
        model.set_gate_reference(v);
    }
    Ok(model)
}
