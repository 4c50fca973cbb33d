//! `xltk gate-report`: the interpretability hook. Runs one comment through
//! a trained checkpoint and emits (token, sim, gate) per position, both to
//! stdout and to out_dir/gate_report.csv.

use super::{csv_writer, ensure_dir};
use crate::config::Settings;
use crate::error::CliError;
use xltk_core::data::{encode, normalize, tokenize, RawComment, NUM_LABELS};
use xltk_core::model::{Batch, Mode};
use xltk_core::Tape;

pub fn run(s: &Settings, text: &str) -> Result<(), CliError> {
    let ckpt = s.checkpoint_path();
    let (model, words, chars) = super::eval::load_model_set(&ckpt)?;
    if !model.variant.has_gating() {
        return Err(CliError::Usage(format!(
            "checkpoint {} was trained without the gate (variant {})",
            ckpt.display(),
            model.variant.name()
        )));
    }

    let comment = RawComment {
        id: "input".into(),
        text: text.to_string(),
        labels: [0; NUM_LABELS],
    };
    let sample = encode(&comment, &words, &chars, model.config.t_max, model.config.t_char);
    // Report surface forms, not vocabulary entries, so unknown words stay
    // readable. Alignment with word_ids holds because encode tokenizes the
    // same way; an empty comment encodes as one unknown slot.
    let mut tokens = tokenize(&normalize(text));
    tokens.truncate(sample.word_len);
    if tokens.is_empty() {
        tokens.push("<UNK>".into());
    }

    let batch = Batch::from_samples(&[&sample], model.config.t_max, model.config.t_char);
    let mut tape = Tape::new();
    let fwd = model.forward(&mut tape, &batch, None, Mode::Eval)?;
    let sims = tape.value(fwd.sims.expect("gating variant exposes sims"));
    let gates = tape.value(fwd.gates.expect("gating variant exposes gates"));

    ensure_dir(&s.out_dir)?;
    let path = s.out_dir.join("gate_report.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["token", "sim", "gate"])?;
    println!("{:<20} {:>9} {:>9}", "token", "sim", "gate");
    for (i, tok) in tokens.iter().enumerate() {
        w.write_record([tok.clone(), sims[i].to_string(), gates[i].to_string()])?;
        println!("{tok:<20} {:>9.4} {:>9.4}", sims[i], gates[i]);
    }
    w.flush().map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;

    let probs = tape.value(fwd.probs);
    let shown: Vec<String> = xltk_core::data::LABELS
        .iter()
        .zip(probs)
        .map(|(l, p)| format!("{l} {p:.3}"))
        .collect();
    println!("\npredictions: {}", shown.join(", "));
    println!("wrote {}", path.display());
    Ok(())
}
