//! Scratch tuning probe for the efficacy trend; not part of the suite.
//! Controlled by env vars: PROBE_MARKERS, PROBE_TMAX, PROBE_BENIGN,
//! PROBE_SEEDS, PROBE_VERBOSE, PROBE_SET (extra key=value pairs, comma-sep).

use std::time::Instant;
use xltk_cli::config::{Config, Settings};
use xltk_cli::pipeline::{build_model, prepare};
use xltk_core::model::Variant;
use xltk_core::synth::{generate, SynthConfig};
use xltk_core::train::{train, TrainHooks};

fn env_or(key: &str, default: &str) -> String {
    std::env::var(key).unwrap_or_else(|_| default.to_string())
}

fn settings(seed: u64, t_max: usize, extra: &str) -> Settings {
    let mut cfg = Config::default();
    let t_max_s = t_max.to_string();
    let base = [
        ("dim_a", "8"),
        ("dim_b", "8"),
        ("dim_c", "12"),
        ("proj_dim", "16"),
        ("word_hidden", "8"),
        ("char_embed_dim", "6"),
        ("char_hidden", "6"),
        ("heads", "4"),
        ("head_hidden", "16"),
        ("t_max", t_max_s.as_str()),
        ("t_char", "96"),
        ("epochs", "20"),
        ("patience", "19"),
        ("batch_size", "32"),
        ("lr_schedule", "fixed"),
        ("lr", "0.005"),
        ("dropout_out", "0"),
        ("dropout_rec", "0"),
    ];
    for (k, v) in base {
        cfg.set(k, v).unwrap();
    }
    for kv in extra.split(',').filter(|s| !s.is_empty()) {
        cfg.apply_override(kv).unwrap();
    }
    cfg.set("seed", &seed.to_string()).unwrap();
    Settings::from_config(&cfg).unwrap()
}

#[test]
fn probe() {
    let markers: usize = env_or("PROBE_MARKERS", "3").parse().unwrap();
    let gen_tmax: usize = env_or("PROBE_TMAX", "18").parse().unwrap();
    let benign: usize = env_or("PROBE_BENIGN", "240").parse().unwrap();
    let verbose = env_or("PROBE_VERBOSE", "0") == "1";
    let extra = env_or("PROBE_SET", "");
    let seeds: Vec<u64> = env_or("PROBE_SEEDS", "1")
        .split(',')
        .map(|s| s.parse().unwrap())
        .collect();

    let corpus = generate(&SynthConfig {
        n: 5000,
        seed: 17,
        t_min: 6,
        t_max: gen_tmax,
        benign_vocab: benign,
        markers_per_positive: markers,
        ..SynthConfig::default()
    });
    println!("markers={markers} gen_tmax={gen_tmax} benign={benign} extra=[{extra}]");
    for &seed in &seeds {
        let t0 = Instant::now();
        let s = settings(seed, gen_tmax, &extra);
        let prep = prepare(&s, &corpus).unwrap();
        let mut run = |variant: Variant| {
            let mut model = build_model(&s, &prep, variant).unwrap();
            let rep = train(
                &mut model,
                &prep.train,
                &prep.valid,
                &s.train,
                TrainHooks::default(),
            )
            .unwrap();
            if verbose {
                for l in &rep.log {
                    println!(
                        "    {variant:?} epoch {:2} loss {:.5} val {:.4}",
                        l.epoch, l.loss, l.val_macro_f1
                    );
                }
            }
            rep.best_val_macro_f1
        };
        let full = run(Variant::Full);
        let nogate = run(Variant::NoGating);
        println!(
            "seed {seed}: full {full:.4}  no_gating {nogate:.4}  ({})  {:.0}s",
            if full > nogate {
                "full ahead"
            } else {
                "NO-GATING AHEAD"
            },
            t0.elapsed().as_secs_f64()
        );
    }
}
