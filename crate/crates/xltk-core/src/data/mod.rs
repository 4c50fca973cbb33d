//! Corpus ingestion and preparation: CSV loading, text normalization, word
//! and character tokenization, vocabulary construction, stratified splitting,
//! and a binary cache for tokenized samples.

mod cache;
mod csv_load;
mod normalize;
mod split;
mod tokenize;

pub use cache::{read_cache, write_cache};
pub use csv_load::{load_csv, write_csv};
pub use normalize::normalize;
pub use split::{stratified_split, SplitSpec, Splits};
pub use tokenize::{char_tokens, encode, tokenize};

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

/// Label columns, in corpus order.
pub const LABELS: [&str; 6] = [
    "toxic",
    "severe_toxic",
    "obscene",
    "threat",
    "insult",
    "identity_hate",
];
pub const NUM_LABELS: usize = 6;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const NUM: u32 = 2;
/// Marker substituted for digit runs during normalization.
pub const NUM_TOKEN: &str = "<NUM>";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] ::csv::Error),
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("row error at line {line}: label `{column}` is `{value}`, expected 0 or 1")]
    BadLabel {
        line: u64,
        column: String,
        value: String,
    },
    #[error("row error at line {line}: missing field `{column}`")]
    MissingField { line: u64, column: String },
    #[error("corpus has {0} samples; at least 10 required to split")]
    TooFewSamples(usize),
    #[error("split fractions {0:?} do not sum to 1")]
    BadFractions([f64; 3]),
    #[error("vocabulary file corrupt at line {0}")]
    BadVocabLine(usize),
    #[error("cache format error: {0}")]
    BadCache(String),
}

/// One corpus row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawComment {
    pub id: String,
    pub text: String,
    pub labels: [u8; NUM_LABELS],
}

impl RawComment {
    pub fn any_toxic(&self) -> bool {
        self.labels.iter().any(|&l| l == 1)
    }

    /// Labels packed into the low six bits (stratification key).
    pub fn label_key(&self) -> u8 {
        self.labels
            .iter()
            .enumerate()
            .fold(0u8, |k, (i, &l)| k | (l << i))
    }
}

/// Token -> index map with three reserved slots: 0 = padding, 1 = unknown,
/// 2 = the digit-run marker.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Build from token occurrences, keeping tokens seen at least
    /// `min_frequency` times. Order is deterministic: by descending count,
    /// then lexicographic.
    pub fn build<'a>(tokens: impl Iterator<Item = &'a str>, min_frequency: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for tok in tokens {
            if tok == NUM_TOKEN {
                continue; // has a reserved slot
            }
            *counts.entry(tok).or_insert(0) += 1;
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_frequency)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t.to_string()))
    }

    fn from_tokens(tokens: impl Iterator<Item = String>) -> Self {
        let mut v = Vocabulary {
            tokens: vec!["<PAD>".into(), "<UNK>".into(), NUM_TOKEN.into()],
            index: HashMap::new(),
        };
        for t in tokens {
            let id = v.tokens.len() as u32;
            if v.index.insert(t.clone(), id).is_none() {
                v.tokens.push(t);
            }
        }
        v.index.insert(NUM_TOKEN.into(), NUM);
        v
    }

    /// Index for a token; unknown tokens map to [`UNK`].
    pub fn id_of(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    /// Total table size including the three reserved slots.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved slots always present
    }

    /// Non-reserved tokens in index order.
    pub fn entries(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().skip(3).map(String::as_str)
    }

    /// Persist as one escaped token per line, index order (reserved slots
    /// implicit).
    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let mut f = std::fs::File::create(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        for tok in self.entries() {
            let escaped = tok
                .replace('\\', "\\\\")
                .replace('\n', "\\n")
                .replace('\r', "\\r")
                .replace('\t', "\\t");
            writeln!(f, "{escaped}").map_err(|e| DataError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let f = std::fs::File::open(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut tokens = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| DataError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            let mut out = String::with_capacity(line.len());
            let mut chars = line.chars();
            while let Some(c) = chars.next() {
                if c != '\\' {
                    out.push(c);
                    continue;
                }
                match chars.next() {
                    Some('\\') => out.push('\\'),
                    Some('n') => out.push('\n'),
                    Some('r') => out.push('\r'),
                    Some('t') => out.push('\t'),
                    _ => return Err(DataError::BadVocabLine(i + 1)),
                }
            }
            tokens.push(out);
        }
        Ok(Self::from_tokens(tokens.into_iter()))
    }
}

/// A comment after tokenization: fixed-width padded id sequences plus true
/// lengths and the label vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedSample {
    pub word_ids: Vec<u32>,
    pub char_ids: Vec<u32>,
    pub word_len: usize,
    pub char_len: usize,
    pub labels: [u8; NUM_LABELS],
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_reserves_three_slots() {
        let toks = ["dog", "dog", "cat", "cat", "rare"];
        let v = Vocabulary::build(toks.iter().copied(), 2);
        assert_eq!(v.len(), 5); // PAD UNK NUM cat dog
        assert_eq!(v.id_of("rare"), UNK);
        assert_eq!(v.id_of(NUM_TOKEN), NUM);
        assert_ne!(v.id_of("dog"), v.id_of("cat"));
        assert!(v.id_of("dog") >= 3);
    }

    #[test]
    fn vocab_order_is_deterministic() {
        let toks = ["b", "a", "b", "a", "c", "c"];
        let v1 = Vocabulary::build(toks.iter().copied(), 1);
        let v2 = Vocabulary::build(toks.iter().rev().copied(), 1);
        for t in ["a", "b", "c"] {
            assert_eq!(v1.id_of(t), v2.id_of(t));
        }
    }

    #[test]
    fn vocab_roundtrips_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        let toks = ["ет", "ет", "a b", "a b", "x\ty", "x\ty"];
        let v = Vocabulary::build(toks.iter().copied(), 2);
        v.save(&p).unwrap();
        let w = Vocabulary::load(&p).unwrap();
        assert_eq!(v.len(), w.len());
        for t in ["ет", "a b", "x\ty"] {
            assert_eq!(v.id_of(t), w.id_of(t));
        }
    }

    #[test]
    fn label_key_packs_bits() {
        let c = RawComment {
            id: "x".into(),
            text: String::new(),
            labels: [1, 0, 0, 1, 0, 0],
        };
        assert_eq!(c.label_key(), 0b001001);
        assert!(c.any_toxic());
    }
}
