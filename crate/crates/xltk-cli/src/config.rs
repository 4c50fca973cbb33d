//! Flat `key = value` configuration. One schema table is the single source
//! of truth: it seeds the defaults, validates every file line and `--set`
//! override, and generates the key listing shown under `--help`.

use crate::error::CliError;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use xltk_core::model::{ModelConfig, Variant};
use xltk_core::train::{Schedule, TrainConfig};

pub struct KeySpec {
    pub key: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

macro_rules! keys {
    ($(($key:literal, $default:literal, $help:literal),)*) => {
        pub const CONFIG_KEYS: &[KeySpec] = &[
            $(KeySpec { key: $key, default: $default, help: $help },)*
        ];
    };
}

keys![
    ("seed", "17", "Master seed; every random stream derives from it."),
    ("data", "", "Corpus CSV with id, comment_text, and six 0/1 label columns."),
    ("out_dir", "out", "Directory all artifacts are written into."),
    ("checkpoint", "", "Checkpoint to load for eval/gate-report; empty means <out_dir>/checkpoint.xlck. Vocabulary files are expected beside it."),
    ("embeddings_a", "", "Pretrained table for source A, text lines `token v1 .. vd`; empty keeps the seeded random fill."),
    ("embeddings_b", "", "Pretrained table for source B."),
    ("embeddings_c", "", "Pretrained table for source C."),
    ("dim_a", "300", "Embedding width of source A."),
    ("dim_b", "300", "Embedding width of source B."),
    ("dim_c", "768", "Embedding width of source C."),
    ("proj_dim", "512", "Width the fused embedding is projected to; the gate and encoder live here."),
    ("word_hidden", "256", "Word BiLSTM hidden size per direction."),
    ("char_embed_dim", "200", "Character embedding width."),
    ("char_hidden", "128", "Character BiLSTM hidden size per direction."),
    ("heads", "8", "Self-attention heads; must divide 2*word_hidden."),
    ("head_hidden", "256", "Dense width of the classification head."),
    ("t_max", "300", "Word positions kept per comment."),
    ("t_char", "800", "Character positions kept per comment."),
    ("dropout_out", "0.3", "Dropout on non-recurrent connections."),
    ("dropout_rec", "0.2", "Variational recurrent dropout inside the LSTMs."),
    ("unfreeze_word_tables", "false", "Train the three word embedding tables instead of freezing them."),
    ("variant", "full", "Architecture variant: full, no_gating, no_char, no_multisource, bce_loss, no_smote, no_residual, no_attention."),
    ("min_freq", "2", "Word vocabulary frequency floor, counted on the training split only."),
    ("char_min_freq", "1", "Character vocabulary frequency floor."),
    ("val_frac", "0.1", "Validation fraction of the stratified split."),
    ("test_frac", "0.1", "Test fraction of the stratified split."),
    ("min_stratum", "10", "Label combinations rarer than this pool into a single stratum."),
    ("epochs", "30", "Epoch cap, at most 60."),
    ("batch_size", "64", "Samples per optimizer step."),
    ("lr_schedule", "cosine", "Learning-rate schedule: cosine (warm restarts) or fixed."),
    ("lr", "0.0001", "Learning rate in fixed mode."),
    ("lr_min", "0.000001", "Cosine floor."),
    ("lr_max", "0.0001", "Cosine ceiling."),
    ("lr_period", "15", "Cosine restart period in epochs."),
    ("clip_norm", "1", "Global gradient-norm ceiling."),
    ("bias_correction", "true", "Adam bias correction; --no-bias-correction runs the uncorrected update."),
    ("gamma", "2", "Focal-loss exponent."),
    ("smote_cap", "20000", "Ceiling on synthetic minority rows generated per epoch."),
    ("smote_ratio", "0.5", "Target minority:majority ratio the oversampler fills toward."),
    ("smote_k", "5", "Nearest neighbours considered when interpolating synthetics."),
    ("patience", "7", "Epochs without validation improvement before stopping; must stay below epochs."),
    ("min_improvement", "0.00001", "Validation macro-F1 delta that counts as improvement."),
    ("threshold", "0.5", "Decision threshold on the sigmoid outputs."),
    ("log_timing", "false", "Record real epoch seconds in the training log (breaks byte-for-byte reproducibility)."),
    ("bootstrap", "1000", "Bootstrap replicates behind eval's confidence intervals."),
    ("ablate_variants", "full,no_gating,no_char,no_multisource,bce_loss,no_smote,no_residual,no_attention", "Comma-separated variants the ablate subcommand trains."),
];

/// Key listing appended to `--help`.
pub fn help_text() -> String {
    let mut out = String::from(
        "Configuration keys (file lines `key = value`, overridden by --set key=value):\n",
    );
    for k in CONFIG_KEYS {
        out.push_str(&format!("  {} = {}\n      {}\n", k.key, k.default, k.help));
    }
    out.push_str(
        "\nEnvironment:\n  XLTK_THREADS\n      Upper bound on worker threads (>= 1). \
         Every current stage runs single-threaded for bit-reproducibility, so any \
         accepted value is honored trivially.\n",
    );
    out
}

fn spec_of(key: &str) -> Option<&'static KeySpec> {
    CONFIG_KEYS.iter().find(|k| k.key == key)
}

/// Raw key/value store, always fully populated over the schema defaults.
#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<&'static str, String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            values: CONFIG_KEYS
                .iter()
                .map(|k| (k.key, k.default.to_string()))
                .collect(),
        }
    }
}

impl Config {
    /// Defaults overlaid with the given file.
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = CliError::io_at(path, std::fs::read_to_string(path))?;
        let mut cfg = Config::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| {
                CliError::Usage(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let spec = spec_of(key)
            .ok_or_else(|| CliError::Usage(format!("unknown config key `{key}`")))?;
        self.values.insert(spec.key, value.to_string());
        Ok(())
    }

    /// Apply one `--set key=value` argument.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), CliError> {
        let (key, value) = kv.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--set expects key=value, got `{kv}`"))
        })?;
        self.set(key.trim(), value.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        &self.values[spec_of(key).expect("key vetted by schema").key]
    }
}

fn parse<T: FromStr>(cfg: &Config, key: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    cfg.get(key)
        .parse()
        .map_err(|e| CliError::Usage(format!("config key `{key}`: {e} (value `{}`)", cfg.get(key))))
}

fn parse_path(cfg: &Config, key: &str) -> Option<PathBuf> {
    let raw = cfg.get(key);
    (!raw.is_empty()).then(|| PathBuf::from(raw))
}

fn parse_variant(raw: &str, key: &str) -> Result<Variant, CliError> {
    // The config vocabulary is snake_case; accept dashed spellings too.
    raw.trim()
        .replace('_', "-")
        .parse()
        .map_err(|_| CliError::Usage(format!("config key `{key}`: unknown variant `{raw}`")))
}

/// Typed, validated view of a [`Config`] plus the environment.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub embeddings: [Option<PathBuf>; 3],
    pub dim_a: usize,
    pub dim_b: usize,
    pub dim_c: usize,
    pub proj_dim: usize,
    pub word_hidden: usize,
    pub char_embed_dim: usize,
    pub char_hidden: usize,
    pub heads: usize,
    pub head_hidden: usize,
    pub t_max: usize,
    pub t_char: usize,
    pub dropout_out: f64,
    pub dropout_rec: f64,
    pub unfreeze_word_tables: bool,
    pub variant: Variant,
    pub min_freq: usize,
    pub char_min_freq: usize,
    pub val_frac: f64,
    pub test_frac: f64,
    pub min_stratum: usize,
    pub bootstrap: usize,
    pub ablate_variants: Vec<Variant>,
    pub train: TrainConfig,
    /// Ceiling from XLTK_THREADS; informational while every stage is serial.
    pub threads: usize,
}

impl Settings {
    pub fn from_config(cfg: &Config) -> Result<Settings, CliError> {
        let epochs: usize = parse(cfg, "epochs")?;
        if !(1..=60).contains(&epochs) {
            return Err(CliError::Usage(format!(
                "config key `epochs`: must be between 1 and 60, got {epochs}"
            )));
        }
        let patience: usize = parse(cfg, "patience")?;
        if patience == 0 || patience >= epochs {
            return Err(CliError::Usage(format!(
                "config key `patience`: must be positive and below epochs ({epochs}), got {patience}"
            )));
        }
        let batch_size: usize = parse(cfg, "batch_size")?;
        if batch_size == 0 {
            return Err(CliError::Usage("config key `batch_size`: must be positive".into()));
        }

        let val_frac: f64 = parse(cfg, "val_frac")?;
        let test_frac: f64 = parse(cfg, "test_frac")?;
        for (key, f) in [("val_frac", val_frac), ("test_frac", test_frac)] {
            if !(0.0..1.0).contains(&f) || f == 0.0 {
                return Err(CliError::Usage(format!(
                    "config key `{key}`: must lie in (0, 1), got {f}"
                )));
            }
        }
        if val_frac + test_frac >= 1.0 {
            return Err(CliError::Usage(format!(
                "val_frac + test_frac must leave room for training data, got {}",
                val_frac + test_frac
            )));
        }

        let threshold: f64 = parse(cfg, "threshold")?;
        if !(0.0..=1.0).contains(&threshold) {
            return Err(CliError::Usage(format!(
                "config key `threshold`: must lie in [0, 1], got {threshold}"
            )));
        }
        let gamma: f64 = parse(cfg, "gamma")?;
        if gamma < 0.0 {
            return Err(CliError::Usage("config key `gamma`: must be nonnegative".into()));
        }
        let smote_ratio: f64 = parse(cfg, "smote_ratio")?;
        if smote_ratio <= 0.0 {
            return Err(CliError::Usage("config key `smote_ratio`: must be positive".into()));
        }
        let smote_k: usize = parse(cfg, "smote_k")?;
        if smote_k == 0 {
            return Err(CliError::Usage("config key `smote_k`: must be positive".into()));
        }
        let clip_norm: f64 = parse(cfg, "clip_norm")?;
        if clip_norm <= 0.0 {
            return Err(CliError::Usage("config key `clip_norm`: must be positive".into()));
        }

        let lr: f64 = parse(cfg, "lr")?;
        let lr_min: f64 = parse(cfg, "lr_min")?;
        let lr_max: f64 = parse(cfg, "lr_max")?;
        let lr_period: f64 = parse(cfg, "lr_period")?;
        for (key, v) in [("lr", lr), ("lr_min", lr_min), ("lr_max", lr_max), ("lr_period", lr_period)] {
            if v <= 0.0 || !v.is_finite() {
                return Err(CliError::Usage(format!(
                    "config key `{key}`: must be positive, got {v}"
                )));
            }
        }
        if lr_min > lr_max {
            return Err(CliError::Usage(format!(
                "lr_min ({lr_min}) must not exceed lr_max ({lr_max})"
            )));
        }
        let schedule = match cfg.get("lr_schedule") {
            "fixed" => Schedule::Fixed { lr },
            "cosine" => Schedule::Cosine { min: lr_min, max: lr_max, period: lr_period },
            other => {
                return Err(CliError::Usage(format!(
                    "config key `lr_schedule`: expected `fixed` or `cosine`, got `{other}`"
                )))
            }
        };

        let seed: u64 = parse(cfg, "seed")?;
        let variant = parse_variant(cfg.get("variant"), "variant")?;
        let mut ablate_variants = Vec::new();
        for raw in cfg.get("ablate_variants").split(',') {
            let v = parse_variant(raw, "ablate_variants")?;
            if ablate_variants.contains(&v) {
                return Err(CliError::Usage(format!(
                    "config key `ablate_variants`: variant `{}` listed twice",
                    raw.trim()
                )));
            }
            ablate_variants.push(v);
        }

        let min_freq: usize = parse(cfg, "min_freq")?;
        let char_min_freq: usize = parse(cfg, "char_min_freq")?;
        if min_freq == 0 || char_min_freq == 0 {
            return Err(CliError::Usage(
                "config keys `min_freq`/`char_min_freq`: must be positive".into(),
            ));
        }

        let threads = match std::env::var("XLTK_THREADS") {
            Err(std::env::VarError::NotPresent) => 1,
            Err(e) => return Err(CliError::Usage(format!("XLTK_THREADS: {e}"))),
            Ok(raw) => match raw.parse::<usize>() {
                Ok(n) if n >= 1 => n,
                _ => {
                    return Err(CliError::Usage(format!(
                        "XLTK_THREADS: expected an integer >= 1, got `{raw}`"
                    )))
                }
            },
        };

        Ok(Settings {
            seed,
            data: parse_path(cfg, "data"),
            out_dir: PathBuf::from(cfg.get("out_dir")),
            checkpoint: parse_path(cfg, "checkpoint"),
            embeddings: [
                parse_path(cfg, "embeddings_a"),
                parse_path(cfg, "embeddings_b"),
                parse_path(cfg, "embeddings_c"),
            ],
            dim_a: parse(cfg, "dim_a")?,
            dim_b: parse(cfg, "dim_b")?,
            dim_c: parse(cfg, "dim_c")?,
            proj_dim: parse(cfg, "proj_dim")?,
            word_hidden: parse(cfg, "word_hidden")?,
            char_embed_dim: parse(cfg, "char_embed_dim")?,
            char_hidden: parse(cfg, "char_hidden")?,
            heads: parse(cfg, "heads")?,
            head_hidden: parse(cfg, "head_hidden")?,
            t_max: parse(cfg, "t_max")?,
            t_char: parse(cfg, "t_char")?,
            dropout_out: parse(cfg, "dropout_out")?,
            dropout_rec: parse(cfg, "dropout_rec")?,
            unfreeze_word_tables: parse(cfg, "unfreeze_word_tables")?,
            variant,
            min_freq,
            char_min_freq,
            val_frac,
            test_frac,
            min_stratum: parse(cfg, "min_stratum")?,
            bootstrap: parse(cfg, "bootstrap")?,
            ablate_variants,
            train: TrainConfig {
                epochs,
                batch_size,
                schedule,
                clip_norm,
                bias_correction: parse(cfg, "bias_correction")?,
                gamma,
                smote_cap: parse(cfg, "smote_cap")?,
                smote_ratio,
                smote_k,
                patience,
                min_improvement: parse(cfg, "min_improvement")?,
                threshold,
                seed,
                log_timing: parse(cfg, "log_timing")?,
            },
            threads,
        })
    }

    /// Model dimensions at given vocabulary sizes. Validation happens at
    /// model construction.
    pub fn model_config(&self, word_vocab: usize, char_vocab: usize) -> ModelConfig {
        let mut mc = ModelConfig::with_vocab(word_vocab, char_vocab);
        mc.dim_a = self.dim_a;
        mc.dim_b = self.dim_b;
        mc.dim_c = self.dim_c;
        mc.proj_dim = self.proj_dim;
        mc.word_hidden = self.word_hidden;
        mc.char_embed_dim = self.char_embed_dim;
        mc.char_hidden = self.char_hidden;
        mc.heads = self.heads;
        mc.head_hidden = self.head_hidden;
        mc.t_max = self.t_max;
        mc.t_char = self.t_char;
        mc.dropout_out = self.dropout_out;
        mc.dropout_rec = self.dropout_rec;
        mc.unfreeze_word_tables = self.unfreeze_word_tables;
        mc
    }

    /// Where eval/gate-report look for the model.
    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out_dir.join("checkpoint.xlck"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_assemble() {
        let s = Settings::from_config(&Config::default()).unwrap();
        assert_eq!(s.seed, 17);
        assert_eq!(s.train.epochs, 30);
        assert_eq!(s.train.patience, 7);
        assert_eq!(s.ablate_variants.len(), 8);
        assert_eq!(s.variant, Variant::Full);
        assert!(s.data.is_none());
        assert!(!s.train.log_timing);
        assert_eq!(
            s.train.schedule,
            Schedule::Cosine { min: 1e-6, max: 1e-4, period: 15.0 }
        );
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut cfg = Config::default();
        let err = cfg.set("leraning_rate", "1").unwrap_err();
        assert!(err.to_string().contains("leraning_rate"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn override_parses_and_wins() {
        let mut cfg = Config::default();
        cfg.apply_override("seed=99").unwrap();
        cfg.apply_override(" epochs = 12 ").unwrap();
        let s = Settings::from_config(&cfg).unwrap();
        assert_eq!(s.seed, 99);
        assert_eq!(s.train.epochs, 12);
        assert_eq!(s.train.seed, 99);
    }

    #[test]
    fn variants_accept_both_spellings() {
        let mut cfg = Config::default();
        cfg.set("variant", "no_gating").unwrap();
        assert_eq!(Settings::from_config(&cfg).unwrap().variant, Variant::NoGating);
        cfg.set("variant", "no-char").unwrap();
        assert_eq!(Settings::from_config(&cfg).unwrap().variant, Variant::NoChar);
        cfg.set("variant", "nope").unwrap();
        assert!(Settings::from_config(&cfg).is_err());
    }

    #[test]
    fn bounds_are_enforced() {
        for (key, value) in [
            ("epochs", "61"),
            ("epochs", "0"),
            ("patience", "30"), // not below default epochs = 30
            ("patience", "0"),
            ("val_frac", "0"),
            ("test_frac", "1.2"),
            ("threshold", "1.5"),
            ("lr_schedule", "linear"),
            ("smote_k", "0"),
            ("clip_norm", "-1"),
        ] {
            let mut cfg = Config::default();
            cfg.set(key, value).unwrap();
            let err = Settings::from_config(&cfg).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{key}={value} should be a usage error");
        }
    }

    #[test]
    fn file_roundtrip_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nseed = 5\n\nepochs=9\npatience = 3\n").unwrap();
        let s = Settings::from_config(&Config::load(&path).unwrap()).unwrap();
        assert_eq!((s.seed, s.train.epochs, s.train.patience), (5, 9, 3));
    }

    #[test]
    fn malformed_file_lines_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "seed = 5\nnot a pair\n").unwrap();
        let err = Config::load(&path).unwrap_err();
        assert!(err.to_string().contains(":2"));
    }

    #[test]
    fn help_text_names_every_key_and_default() {
        let help = help_text();
        for k in CONFIG_KEYS {
            assert!(help.contains(&format!("{} = {}", k.key, k.default)), "{}", k.key);
        }
    }

    #[test]
    fn duplicate_ablate_variant_rejected() {
        let mut cfg = Config::default();
        cfg.set("ablate_variants", "full,no_gating,full").unwrap();
        assert!(Settings::from_config(&cfg).is_err());
    }
}
