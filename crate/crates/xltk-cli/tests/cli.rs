//! End-to-end checks of the `xltk` binary: exit codes, artifacts, help/schema
//! agreement, and byte-level reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use xltk_cli::CONFIG_KEYS;
use xltk_core::data::write_csv;
use xltk_core::synth::{generate, SynthConfig};

fn xltk() -> Command {
    Command::new(env!("CARGO_BIN_EXE_xltk"))
}

fn run(args: &[&str]) -> Output {
    xltk().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Small dimensions so subprocess trainings stay fast.
fn desk_args(data: &Path, out_dir: &Path) -> Vec<String> {
    let mut v = vec![
        format!("--set=data={}", data.display()),
        format!("--set=out_dir={}", out_dir.display()),
    ];
    for (k, val) in [
        ("dim_a", "8"),
        ("dim_b", "8"),
        ("dim_c", "12"),
        ("proj_dim", "16"),
        ("word_hidden", "8"),
        ("char_embed_dim", "6"),
        ("char_hidden", "6"),
        ("heads", "4"),
        ("head_hidden", "16"),
        ("t_max", "16"),
        ("t_char", "48"),
        ("epochs", "2"),
        ("patience", "1"),
    ] {
        v.push(format!("--set={k}={val}"));
    }
    v
}

fn fixture_corpus(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let rows = generate(&SynthConfig { n, seed, ..SynthConfig::default() });
    let path = dir.join("corpus.csv");
    write_csv(&path, &rows).unwrap();
    path
}

#[test]
fn help_enumerates_every_config_key_with_default() {
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for k in CONFIG_KEYS {
        let line = format!("{} = {}", k.key, k.default);
        assert!(text.contains(&line), "--help is missing `{line}`");
    }
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = run(&["transmogrify"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_config_key_is_rejected_everywhere() {
    let out = run(&["gradcheck", "--set", "lerning_rate=1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("lerning_rate"));

    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "epochs = 2\nmystery_knob = 9\n").unwrap();
    let out = run(&["gradcheck", "--config", conf.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("mystery_knob"));
}

#[test]
fn missing_data_file_exits_2_and_names_the_path() {
    let out = run(&["train", "--set", "data=/nowhere/missing.csv"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("/nowhere/missing.csv"));
}

#[test]
fn header_only_corpus_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::write(
        &path,
        "id,comment_text,toxic,severe_toxic,obscene,threat,insult,identity_hate\n",
    )
    .unwrap();
    let mut args = vec!["train".to_string()];
    args.extend(desk_args(&path, &dir.path().join("out")));
    let out = xltk().args(&args).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn fixture_train_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_corpus(dir.path(), 200, 5);
    let out_dir = dir.path().join("run");
    let mut args = vec!["train".to_string(), "--seed".into(), "5".into()];
    args.extend(desk_args(&data, &out_dir));
    let out = xltk().args(&args).output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    for artifact in ["checkpoint.xlck", "train_log.csv", "metrics.csv", "words.vocab", "chars.vocab"] {
        assert!(out_dir.join(artifact).exists(), "missing {artifact}");
    }
    let log = std::fs::read_to_string(out_dir.join("train_log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("epoch,loss,val_macro_f1,lr,seconds"));
    assert_eq!(lines.count(), 2, "one row per epoch");
}

#[test]
fn same_seed_yields_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_corpus(dir.path(), 200, 5);
    let outs = [dir.path().join("a"), dir.path().join("b")];
    for out_dir in &outs {
        let mut args = vec!["train".to_string(), "--set".into(), "seed=7".into()];
        args.extend(desk_args(&data, out_dir));
        let out = xltk().args(&args).output().unwrap();
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    for artifact in ["checkpoint.xlck", "train_log.csv", "metrics.csv"] {
        let a = std::fs::read(outs[0].join(artifact)).unwrap();
        let b = std::fs::read(outs[1].join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} differs between identical runs");
    }
}

#[test]
fn gradcheck_lists_every_check_once_and_passes() {
    let out = run(&["gradcheck", "--seed", "3"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let expected: Vec<String> = xltk_core::gradcheck::run_suite(3, None)
        .into_iter()
        .map(|r| r.name)
        .chain(std::iter::once("full_model".into()))
        .collect();
    for name in &expected {
        let hits = text
            .lines()
            .filter(|l| l.split_whitespace().next() == Some(name.as_str()))
            .count();
        assert_eq!(hits, 1, "`{name}` should be reported exactly once");
    }
    assert!(text.contains("PASS"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn corrupted_adjoint_fails_gradcheck() {
    for target in ["matmul", "full_model"] {
        let out = xltk()
            .args(["gradcheck", "--seed", "3"])
            .env("XLTK_GRADCHECK_CORRUPT", target)
            .output()
            .unwrap();
        assert_eq!(code(&out), 1, "corrupting {target} must exit 1");
        assert!(stderr(&out).contains(target));
    }
}

#[test]
fn ablate_emits_one_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_corpus(dir.path(), 200, 5);
    let out_dir = dir.path().join("abl");
    let mut args = vec!["ablate".to_string(), "--seed".into(), "5".into()];
    args.extend(desk_args(&data, &out_dir));
    let out = xltk().args(&args).output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let csv = std::fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,macro_f1,delta_f1,trainable_params");
    assert_eq!(lines.len(), 9, "header + 8 variants");
    assert!(lines[1].starts_with("full,"));
    assert!(lines.iter().any(|l| l.starts_with("no_gating,")));
}

#[test]
fn unknown_ablate_variant_is_a_usage_error() {
    let out = run(&["ablate", "--set", "ablate_variants=full,no_everything"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no_everything"));
}

#[test]
fn split_synthetic_writes_corpus_and_partitions() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = run(&[
            "split",
            "--synthetic",
            "300",
            "--seed",
            "11",
            "--set",
            &format!("out_dir={}", out_dir.display()),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    let mut total = 0;
    for name in ["synthetic.csv", "train.csv", "valid.csv", "test.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} not reproducible");
        if name != "synthetic.csv" {
            total += String::from_utf8(a).unwrap().lines().count() - 1;
        }
    }
    assert_eq!(total, 300, "partitions cover the corpus");
}

#[test]
fn eval_and_gate_report_consume_a_trained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_corpus(dir.path(), 200, 5);
    let out_dir = dir.path().join("run");
    let mut args = vec!["train".to_string(), "--seed".into(), "5".into()];
    args.extend(desk_args(&data, &out_dir));
    assert_eq!(code(&xltk().args(&args).output().unwrap()), 0);

    let mut eval_args = vec![
        "eval".to_string(),
        "--seed".into(),
        "5".into(),
        "--set".into(),
        "bootstrap=50".into(),
    ];
    eval_args.extend(desk_args(&data, &out_dir));
    let out = xltk().args(&eval_args).output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let csv = std::fs::read_to_string(out_dir.join("eval.csv")).unwrap();
    assert!(csv.starts_with("name,precision,recall,f1,support,value,ci_lower,ci_upper"));
    assert!(csv.contains("macro_f1"));
    let macro_row = csv.lines().find(|l| l.starts_with("macro_f1,")).unwrap();
    assert_eq!(macro_row.split(',').count(), 8);
    assert!(!macro_row.ends_with(",,"), "macro_f1 row carries its interval");

    let out = run(&[
        "gate-report",
        "--text",
        "you grumzz total mess",
        "--seed",
        "5",
        "--set",
        &format!("out_dir={}", out_dir.display()),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let csv = std::fs::read_to_string(out_dir.join("gate_report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "token,sim,gate");
    assert_eq!(lines.len(), 5, "four tokens reported");
    assert!(lines[1].starts_with("you,"));
    for l in &lines[1..] {
        let gate: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&gate));
    }
}

#[test]
fn eval_without_checkpoint_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_corpus(dir.path(), 50, 5);
    let out = run(&[
        "eval",
        "--set",
        &format!("data={}", data.display()),
        "--set",
        &format!("out_dir={}", dir.path().join("void").display()),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("checkpoint.xlck"));
}

#[test]
fn embed_stats_writes_the_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_corpus(dir.path(), 120, 5);
    let out_dir = dir.path().join("stats");
    let out = run(&[
        "embed-stats",
        "--seed",
        "5",
        "--set",
        &format!("data={}", data.display()),
        "--set",
        &format!("out_dir={}", out_dir.display()),
        "--set",
        "dim_a=6",
        "--set",
        "dim_b=6",
        "--set",
        "dim_c=8",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let csv = std::fs::read_to_string(out_dir.join("embed_stats.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4, "header + three sources");
    assert!(lines[1].starts_with("source_a,1,"), "unit self-correlation: {}", lines[1]);
}

#[test]
fn threads_env_is_validated() {
    for (value, expect) in [("0", 2), ("banana", 2), ("2", 0)] {
        let out = xltk()
            .args(["gradcheck", "--seed", "3"])
            .env("XLTK_THREADS", value)
            .output()
            .unwrap();
        assert_eq!(code(&out), expect, "XLTK_THREADS={value}");
    }
}

#[test]
fn seed_flag_matches_set_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_corpus(dir.path(), 120, 9);
    let outs = [dir.path().join("flag"), dir.path().join("set")];
    for (i, extra) in [vec!["--seed".to_string(), "21".into()], vec!["--set".to_string(), "seed=21".into()]]
        .iter()
        .enumerate()
    {
        let mut args = vec!["train".to_string()];
        args.extend(extra.clone());
        args.extend(desk_args(&data, &outs[i]));
        assert_eq!(code(&xltk().args(&args).output().unwrap()), 0);
    }
    let a = std::fs::read(outs[0].join("checkpoint.xlck")).unwrap();
    let b = std::fs::read(outs[1].join("checkpoint.xlck")).unwrap();
    assert_eq!(a, b);
}
