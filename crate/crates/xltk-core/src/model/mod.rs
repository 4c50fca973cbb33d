//! The classifier: gated multi-source embeddings feeding a two-layer
//! bidirectional LSTM with multi-head self-attention and a character branch,
//! ending in six sigmoid outputs.

mod forward;
mod params;

pub use forward::{Batch, Forward, Mode, RepSpace, SyntheticBatch};
pub use params::{load_checkpoint, save_checkpoint, Param, ParamSet};

use crate::data::NUM_LABELS;
use crate::embed::random_table;
use crate::gate;
use crate::rng::{derived_rng, Stream};
use rand::Rng;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad checkpoint {path}: {reason}")]
    BadCheckpoint { path: String, reason: String },
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

/// Architecture dimensions. Every width is configurable; `with_vocab` fills
/// in the reference configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub word_vocab: usize,
    pub char_vocab: usize,
    pub dim_a: usize,
    pub dim_b: usize,
    pub dim_c: usize,
    pub proj_dim: usize,
    /// Word-encoder LSTM hidden size per direction; the encoder width is
    /// twice this.
    pub word_hidden: usize,
    pub char_embed_dim: usize,
    pub char_hidden: usize,
    pub heads: usize,
    /// Dense width of the classification head.
    pub head_hidden: usize,
    pub t_max: usize,
    pub t_char: usize,
    pub dropout_out: f64,
    pub dropout_rec: f64,
    pub ln_eps: f64,
    /// The three word tables stay frozen unless this is set.
    pub unfreeze_word_tables: bool,
}

impl ModelConfig {
    /// Reference dimensions, sized for the full corpus.
    pub fn with_vocab(word_vocab: usize, char_vocab: usize) -> Self {
        ModelConfig {
            word_vocab,
            char_vocab,
            dim_a: 300,
            dim_b: 300,
            dim_c: 768,
            proj_dim: 512,
            word_hidden: 256,
            char_embed_dim: 200,
            char_hidden: 128,
            heads: 8,
            head_hidden: 256,
            t_max: 300,
            t_char: 800,
            dropout_out: 0.3,
            dropout_rec: 0.2,
            ln_eps: 1e-5,
            unfreeze_word_tables: false,
        }
    }

    /// Width of the word encoder output.
    pub fn encoder_dim(&self) -> usize {
        2 * self.word_hidden
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.encoder_dim() % self.heads != 0 {
            return Err(ModelError::BadConfig(format!(
                "attention heads ({}) must divide the encoder width ({})",
                self.heads,
                self.encoder_dim()
            )));
        }
        for (name, v) in [
            ("word_vocab", self.word_vocab),
            ("char_vocab", self.char_vocab),
            ("dim_a", self.dim_a),
            ("proj_dim", self.proj_dim),
            ("word_hidden", self.word_hidden),
            ("char_embed_dim", self.char_embed_dim),
            ("char_hidden", self.char_hidden),
            ("heads", self.heads),
            ("head_hidden", self.head_hidden),
            ("t_max", self.t_max),
            ("t_char", self.t_char),
        ] {
            if v == 0 {
                return Err(ModelError::BadConfig(format!("{name} must be positive")));
            }
        }
        for (name, p) in [("dropout_out", self.dropout_out), ("dropout_rec", self.dropout_rec)] {
            if !(0.0..1.0).contains(&p) {
                return Err(ModelError::BadConfig(format!(
                    "{name} must be in [0, 1), got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Which piece of the full architecture is switched off, if any. `BceLoss`
/// and `NoSmote` leave the network intact and only change training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoGating,
    NoChar,
    NoMultisource,
    BceLoss,
    NoSmote,
    NoResidual,
    NoAttention,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Full,
        Variant::NoGating,
        Variant::NoChar,
        Variant::NoMultisource,
        Variant::BceLoss,
        Variant::NoSmote,
        Variant::NoResidual,
        Variant::NoAttention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoGating => "no-gating",
            Variant::NoChar => "no-char",
            Variant::NoMultisource => "no-multisource",
            Variant::BceLoss => "bce-loss",
            Variant::NoSmote => "no-smote",
            Variant::NoResidual => "no-residual",
            Variant::NoAttention => "no-attention",
        }
    }

    pub fn has_gating(self) -> bool {
        self != Variant::NoGating
    }

    pub fn has_char(self) -> bool {
        self != Variant::NoChar
    }

    pub fn has_attention(self) -> bool {
        self != Variant::NoAttention
    }

    pub fn multisource(self) -> bool {
        self != Variant::NoMultisource
    }

    pub fn uses_smote(self) -> bool {
        self != Variant::NoSmote
    }

    pub fn uses_focal(self) -> bool {
        self != Variant::BceLoss
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| ModelError::BadConfig(format!("unknown variant `{s}`")))
    }
}

pub struct Model {
    pub config: ModelConfig,
    pub variant: Variant,
    pub params: ParamSet,
}

impl Model {
    /// Build a freshly initialized model. Weight matrices get Xavier-uniform
    /// draws, LSTM forget gates start at 1, the gate reference starts random
    /// (see [`Model::set_gate_reference`]).
    pub fn init(config: ModelConfig, variant: Variant, seed: u64) -> Result<Model, ModelError> {
        config.validate()?;
        let mut set = ParamSet::default();
        let mut next_stream = 0u64;
        let mut xavier = |rows: usize, cols: usize| -> Vec<f64> {
            let mut rng = derived_rng(seed, Stream::ParamInit, next_stream);
            next_stream += 1;
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect()
        };

        let concat = if variant.multisource() {
            config.dim_a + config.dim_b + config.dim_c
        } else {
            config.dim_a
        };
        let d = config.encoder_dim();

        // Embedding tables. Sources keep their seeded fill until load_table
        // overwrites rows from a pretrained file.
        set.push(
            "embed.table_a",
            vec![config.word_vocab, config.dim_a],
            random_table(config.word_vocab, config.dim_a, seed, 0),
            config.unfreeze_word_tables,
        );
        if variant.multisource() {
            set.push(
                "embed.table_b",
                vec![config.word_vocab, config.dim_b],
                random_table(config.word_vocab, config.dim_b, seed, 1),
                config.unfreeze_word_tables,
            );
            set.push(
                "embed.table_c",
                vec![config.word_vocab, config.dim_c],
                random_table(config.word_vocab, config.dim_c, seed, 2),
                config.unfreeze_word_tables,
            );
        }
        set.push(
            "embed.w_proj",
            vec![concat, config.proj_dim],
            xavier(concat, config.proj_dim),
            true,
        );
        set.push("embed.b_proj", vec![config.proj_dim], vec![0.0; config.proj_dim], true);

        if variant.has_gating() {
            let mut rng = derived_rng(seed, Stream::GateInit, 0);
            let mut v: Vec<f64> = (0..config.proj_dim)
                .map(|_| rng.random_range(-0.05..0.05))
                .collect();
            gate::enforce_norm_floor(&mut v);
            set.push("gate.v", vec![config.proj_dim], v, true);
            set.push("gate.beta_raw", vec![1], vec![0.0], true);
        }

        for layer in 0..2usize {
            let input = if layer == 0 { config.proj_dim } else { d };
            for dir in ["fwd", "bwd"] {
                push_lstm(
                    &mut set,
                    &format!("word_lstm.l{layer}.{dir}"),
                    input,
                    config.word_hidden,
                    &mut xavier,
                );
            }
        }

        if variant.has_attention() {
            let dk = d / config.heads;
            for h in 0..config.heads {
                for w in ["w_q", "w_k", "w_v"] {
                    set.push(format!("attn.h{h}.{w}"), vec![d, dk], xavier(d, dk), true);
                }
            }
            set.push("attn.w_o", vec![d, d], xavier(d, d), true);
            set.push("norm.gamma", vec![d], vec![1.0; d], true);
            set.push("norm.beta", vec![d], vec![0.0; d], true);
        }

        if variant.has_char() {
            set.push(
                "embed.char_table",
                vec![config.char_vocab, config.char_embed_dim],
                random_table(config.char_vocab, config.char_embed_dim, seed, 3),
                true,
            );
            for dir in ["fwd", "bwd"] {
                push_lstm(
                    &mut set,
                    &format!("char_lstm.{dir}"),
                    config.char_embed_dim,
                    config.char_hidden,
                    &mut xavier,
                );
            }
        }

        let pooled = d + if variant.has_char() { 2 * config.char_hidden } else { 0 };
        set.push("head.w1", vec![pooled, config.head_hidden], xavier(pooled, config.head_hidden), true);
        set.push("head.b1", vec![config.head_hidden], vec![0.0; config.head_hidden], true);
        set.push(
            "head.w2",
            vec![config.head_hidden, NUM_LABELS],
            xavier(config.head_hidden, NUM_LABELS),
            true,
        );
        set.push("head.b2", vec![NUM_LABELS], vec![0.0; NUM_LABELS], true);

        Ok(Model {
            config,
            variant,
            params: set,
        })
    }

    /// Replace the gate reference direction, e.g. with the toxic-comment
    /// centroid from [`crate::gate::init_reference`].
    pub fn set_gate_reference(&mut self, v: Vec<f64>) {
        if self.variant.has_gating() {
            let p = self.params.get_mut("gate.v");
            assert_eq!(p.len(), v.len());
            p.data = v;
        }
    }

    /// (trainable, total) parameter counts.
    pub fn count_parameters(&self) -> (usize, usize) {
        self.params.count()
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let meta = config_meta(&self.config, self.variant);
        save_checkpoint(path, &self.params, &meta)
    }

    /// Load a checkpoint written by [`Model::save`], reconstructing the
    /// configuration from its metadata and validating every shape.
    pub fn load(path: &Path) -> Result<Model, ModelError> {
        let (set, meta) = load_checkpoint(path)?;
        let (config, variant) = meta_config(&meta, path)?;
        let fresh = Model::init(config.clone(), variant, 0)?;
        if fresh.params.params.len() != set.params.len() {
            return Err(ModelError::BadCheckpoint {
                path: path.display().to_string(),
                reason: format!(
                    "expected {} parameters, found {}",
                    fresh.params.params.len(),
                    set.params.len()
                ),
            });
        }
        for (want, got) in fresh.params.params.iter().zip(&set.params) {
            if want.name != got.name || want.shape != got.shape {
                return Err(ModelError::BadCheckpoint {
                    path: path.display().to_string(),
                    reason: format!(
                        "parameter mismatch: expected {} {:?}, found {} {:?}",
                        want.name, want.shape, got.name, got.shape
                    ),
                });
            }
        }
        Ok(Model {
            config,
            variant,
            params: set,
        })
    }
}

fn push_lstm(
    set: &mut ParamSet,
    prefix: &str,
    input: usize,
    hidden: usize,
    xavier: &mut impl FnMut(usize, usize) -> Vec<f64>,
) {
    set.push(format!("{prefix}.w_x"), vec![input, 4 * hidden], xavier(input, 4 * hidden), true);
    set.push(format!("{prefix}.w_h"), vec![hidden, 4 * hidden], xavier(hidden, 4 * hidden), true);
    // Gate order i, f, g, o; forget bias starts at 1 so cells retain early.
    let mut b = vec![0.0; 4 * hidden];
    b[hidden..2 * hidden].fill(1.0);
    set.push(format!("{prefix}.b"), vec![4 * hidden], b, true);
}

fn config_meta(c: &ModelConfig, variant: Variant) -> Vec<(String, String)> {
    let mut m: Vec<(String, String)> = vec![
        ("variant".into(), variant.name().into()),
        ("word_vocab".into(), c.word_vocab.to_string()),
        ("char_vocab".into(), c.char_vocab.to_string()),
        ("dim_a".into(), c.dim_a.to_string()),
        ("dim_b".into(), c.dim_b.to_string()),
        ("dim_c".into(), c.dim_c.to_string()),
        ("proj_dim".into(), c.proj_dim.to_string()),
        ("word_hidden".into(), c.word_hidden.to_string()),
        ("char_embed_dim".into(), c.char_embed_dim.to_string()),
        ("char_hidden".into(), c.char_hidden.to_string()),
        ("heads".into(), c.heads.to_string()),
        ("head_hidden".into(), c.head_hidden.to_string()),
        ("t_max".into(), c.t_max.to_string()),
        ("t_char".into(), c.t_char.to_string()),
        ("dropout_out".into(), c.dropout_out.to_string()),
        ("dropout_rec".into(), c.dropout_rec.to_string()),
        ("ln_eps".into(), c.ln_eps.to_string()),
    ];
    if c.unfreeze_word_tables {
        m.push(("unfreeze_word_tables".into(), "true".into()));
    }
    m
}

fn meta_config(meta: &[(String, String)], path: &Path) -> Result<(ModelConfig, Variant), ModelError> {
    let find = |key: &str| -> Result<&str, ModelError> {
        meta.iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| ModelError::BadCheckpoint {
                path: path.display().to_string(),
                reason: format!("missing metadata key `{key}`"),
            })
    };
    let usize_of = |key: &str| -> Result<usize, ModelError> {
        find(key)?.parse().map_err(|_| ModelError::BadCheckpoint {
            path: path.display().to_string(),
            reason: format!("bad metadata value for `{key}`"),
        })
    };
    let f64_of = |key: &str| -> Result<f64, ModelError> {
        find(key)?.parse().map_err(|_| ModelError::BadCheckpoint {
            path: path.display().to_string(),
            reason: format!("bad metadata value for `{key}`"),
        })
    };
    let variant = find("variant")?.parse::<Variant>()?;
    let config = ModelConfig {
        word_vocab: usize_of("word_vocab")?,
        char_vocab: usize_of("char_vocab")?,
        dim_a: usize_of("dim_a")?,
        dim_b: usize_of("dim_b")?,
        dim_c: usize_of("dim_c")?,
        proj_dim: usize_of("proj_dim")?,
        word_hidden: usize_of("word_hidden")?,
        char_embed_dim: usize_of("char_embed_dim")?,
        char_hidden: usize_of("char_hidden")?,
        heads: usize_of("heads")?,
        head_hidden: usize_of("head_hidden")?,
        t_max: usize_of("t_max")?,
        t_char: usize_of("t_char")?,
        dropout_out: f64_of("dropout_out")?,
        dropout_rec: f64_of("dropout_rec")?,
        ln_eps: f64_of("ln_eps")?,
        unfreeze_word_tables: meta.iter().any(|(k, v)| k == "unfreeze_word_tables" && v == "true"),
    };
    Ok((config, variant))
}
