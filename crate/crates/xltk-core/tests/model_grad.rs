//! End-to-end gradient verification: every trainable weight of a small but
//! complete model is checked against central finite differences through the
//! full forward pass, synthetic rows included.

use xltk_core::data::TokenizedSample;
use xltk_core::gradcheck;
use xltk_core::model::{Batch, Mode, Model, ModelConfig, SyntheticBatch, Variant};
use xltk_core::Tape;

fn tiny_config() -> ModelConfig {
    ModelConfig {
        word_vocab: 12,
        char_vocab: 9,
        dim_a: 4,
        dim_b: 4,
        dim_c: 6,
        proj_dim: 6,
        word_hidden: 3,
        char_embed_dim: 4,
        char_hidden: 3,
        heads: 2,
        head_hidden: 5,
        t_max: 4,
        t_char: 6,
        dropout_out: 0.0, // finite differences need a deterministic network
        dropout_rec: 0.0,
        ln_eps: 1e-5,
        unfreeze_word_tables: false,
    }
}

fn sample(word_ids: &[u32], char_ids: &[u32], labels: [u8; 6]) -> TokenizedSample {
    let mut w = word_ids.to_vec();
    let mut c = char_ids.to_vec();
    let word_len = w.len();
    let char_len = c.len();
    w.resize(4, 0);
    c.resize(6, 0);
    TokenizedSample {
        word_ids: w,
        char_ids: c,
        word_len,
        char_len,
        labels,
    }
}

fn fixture() -> (Vec<TokenizedSample>, SyntheticBatch) {
    let samples = vec![
        sample(&[3, 4, 5, 6], &[3, 4, 5, 6, 7, 8], [1, 0, 0, 0, 1, 0]),
        sample(&[7, 8], &[4, 5], [0; 6]),
        sample(&[9], &[6, 7, 8], [0, 0, 1, 0, 0, 0]),
    ];
    let synth = SyntheticBatch {
        s: 2,
        reps: (0..12).map(|i| 0.05 * (i as f64) - 0.3).collect(),
        labels: {
            let mut l = vec![0.0; 12];
            l[1] = 1.0;
            l[8] = 1.0;
            l
        },
    };
    (samples, synth)
}

/// Fixed projection weights make the scalar loss sensitive to every output.
fn loss_weights() -> Vec<f64> {
    (0..30)
        .map(|i| if i % 2 == 0 { 0.7 } else { -0.4 } + 0.01 * i as f64)
        .collect()
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let mut model = Model::init(tiny_config(), Variant::Full, 17).unwrap();
    let (samples, synth) = fixture();
    let refs: Vec<&TokenizedSample> = samples.iter().collect();
    let batch = Batch::from_samples(&refs, 4, 6);

    let trainable: Vec<usize> = model
        .params
        .params
        .iter()
        .enumerate()
        .filter(|(_, p)| p.trainable)
        .map(|(i, _)| i)
        .collect();
    let init: Vec<Vec<f64>> = trainable
        .iter()
        .map(|&i| model.params.params[i].data.clone())
        .collect();

    let max_err = gradcheck::check_params(&init, |vals, want_grads| {
        for (k, &i) in trainable.iter().enumerate() {
            model.params.params[i].data = vals[k].to_vec();
        }
        let mut tape = Tape::new();
        let fwd = model
            .forward(&mut tape, &batch, Some(&synth), Mode::Eval)
            .unwrap();
        let w = tape
            .constant(loss_weights(), vec![fwd.rows, 6])
            .unwrap();
        let prod = tape.mul(fwd.probs, w).unwrap();
        let loss = tape.sum_all(prod).unwrap();
        let value = tape.value(loss)[0];
        if !want_grads {
            return (value, None);
        }
        tape.backward(loss).unwrap();
        let grads = model.read_gradients(&tape, &fwd);
        let out: Vec<Vec<f64>> = trainable
            .iter()
            .map(|&i| grads[i].clone().expect("trainable param missing gradient"))
            .collect();
        (value, Some(out))
    });

    assert!(
        max_err < 1e-4,
        "worst relative error across all trainable weights: {max_err:.3e}"
    );
}

#[test]
fn every_variant_routes_gradient_to_all_trainable_params() {
    let (samples, synth) = fixture();
    let refs: Vec<&TokenizedSample> = samples.iter().collect();
    for variant in Variant::ALL {
        let model = Model::init(tiny_config(), variant, 23).unwrap();
        let batch = Batch::from_samples(&refs, 4, 6);
        let mut tape = Tape::new();
        let fwd = model
            .forward(&mut tape, &batch, Some(&synth), Mode::Eval)
            .unwrap();
        let w = tape.constant(loss_weights(), vec![fwd.rows, 6]).unwrap();
        let prod = tape.mul(fwd.probs, w).unwrap();
        let loss = tape.sum_all(prod).unwrap();
        tape.backward(loss).unwrap();
        let grads = model.read_gradients(&tape, &fwd);
        for (p, g) in model.params.params.iter().zip(&grads) {
            if !p.trainable {
                assert!(g.is_none(), "{}: frozen param has a gradient", p.name);
                continue;
            }
            let g = g
                .as_ref()
                .unwrap_or_else(|| panic!("{}: no gradient under {}", p.name, variant.name()));
            assert!(
                g.iter().all(|x| x.is_finite()),
                "{}: non-finite gradient under {}",
                p.name,
                variant.name()
            );
            assert!(
                g.iter().any(|&x| x != 0.0),
                "{}: gradient identically zero under {}",
                p.name,
                variant.name()
            );
        }
    }
}

#[test]
fn padding_rows_of_embedding_tables_receive_no_gradient() {
    let mut config = tiny_config();
    config.unfreeze_word_tables = true;
    let model = Model::init(config.clone(), Variant::Full, 29).unwrap();
    let (samples, _) = fixture();
    let refs: Vec<&TokenizedSample> = samples.iter().collect();
    let batch = Batch::from_samples(&refs, 4, 6);
    let mut tape = Tape::new();
    let fwd = model.forward(&mut tape, &batch, None, Mode::Eval).unwrap();
    let w = tape
        .constant(loss_weights()[..18].to_vec(), vec![3, 6])
        .unwrap();
    let prod = tape.mul(fwd.probs, w).unwrap();
    let loss = tape.sum_all(prod).unwrap();
    tape.backward(loss).unwrap();
    let grads = model.read_gradients(&tape, &fwd);
    for (name, dim) in [
        ("embed.table_a", config.dim_a),
        ("embed.table_b", config.dim_b),
        ("embed.table_c", config.dim_c),
        ("embed.char_table", config.char_embed_dim),
    ] {
        let idx = model.params.index_of(name).unwrap();
        let g = grads[idx].as_ref().unwrap();
        assert!(
            g[..dim].iter().all(|&x| x == 0.0),
            "{name}: padding row picked up gradient"
        );
        assert!(
            g[dim..].iter().any(|&x| x != 0.0),
            "{name}: no gradient reached real rows"
        );
    }
}
