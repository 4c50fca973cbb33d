//! Multi-source embedding front end: three word tables fused by
//! concatenation and projected to the encoder width, plus the character
//! table. Also the correlation diagnostic over per-source comment
//! representations.

use crate::data::{TokenizedSample, Vocabulary, PAD};
use crate::rng::{derived_rng, Stream};
use crate::tensor::{Tape, TensorError, TensorId};
use rand::Rng;
use std::io::{BufRead, BufReader};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected {expected} floats, got {got}")]
    DimMismatch {
        path: String,
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("{path}:{line}: unparseable value `{value}`")]
    Parse {
        path: String,
        line: usize,
        value: String,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Fill a `vocab.len() × dim` table with seeded Uniform(-0.05, 0.05) values
/// and a zeroed padding row.
pub fn random_table(vocab_len: usize, dim: usize, seed: u64, stream_index: u64) -> Vec<f64> {
    let mut rng = derived_rng(seed, Stream::EmbedFill, stream_index);
    let mut data: Vec<f64> = (0..vocab_len * dim)
        .map(|_| rng.random_range(-0.05..0.05))
        .collect();
    for x in &mut data[..dim] {
        *x = 0.0; // PAD row
    }
    data
}

/// Load a pretrained table in text format: one `token v1 .. v_dim` line per
/// word, whitespace separated. Vocabulary tokens absent from the file keep
/// their seeded random fill; file tokens outside the vocabulary are ignored;
/// the padding row is forced to zero.
pub fn load_table(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
    stream_index: u64,
) -> Result<Vec<f64>, EmbedError> {
    let io_err = |e: std::io::Error| EmbedError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut data = random_table(vocab.len(), dim, seed, stream_index);
    let f = std::fs::File::open(path).map_err(io_err)?;
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-empty line has a first field");
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            return Err(EmbedError::DimMismatch {
                path: path.display().to_string(),
                line: lineno + 1,
                expected: dim,
                got: values.len(),
            });
        }
        let id = vocab.id_of(token);
        if id == crate::data::UNK && token != "<UNK>" {
            continue; // not in vocabulary
        }
        let row = id as usize * dim;
        for (j, v) in values.iter().enumerate() {
            data[row + j] = v.parse().map_err(|_| EmbedError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                value: v.to_string(),
            })?;
        }
    }
    for x in &mut data[..dim] {
        *x = 0.0;
    }
    Ok(data)
}

/// Tape handles for the fusion front end.
#[derive(Clone, Copy)]
pub struct FusionIds {
    pub table_a: TensorId,
    pub table_b: TensorId,
    pub table_c: TensorId,
    pub w_proj: TensorId,
    pub b_proj: TensorId,
}

/// Look up `ids` in all three source tables, concatenate along the feature
/// axis, and project: out[i] = W·concat(A[id], B[id], C[id]) + b. Padding ids
/// hit the zeroed row of every table, so a PAD position's fused vector is
/// exactly zero before projection.
pub fn fuse_project(
    tape: &mut Tape,
    ids: &[usize],
    f: FusionIds,
) -> Result<TensorId, TensorError> {
    let a = tape.row_gather(f.table_a, ids)?;
    let b = tape.row_gather(f.table_b, ids)?;
    let c = tape.row_gather(f.table_c, ids)?;
    let cat = tape.concat_cols(&[a, b, c])?;
    let proj = tape.matmul(cat, f.w_proj)?;
    tape.add_row_vec(proj, f.b_proj)
}

/// Like [`fuse_project`] but with a single source table (the source-ablated
/// configuration).
pub fn single_source_project(
    tape: &mut Tape,
    ids: &[usize],
    table: TensorId,
    w_proj: TensorId,
    b_proj: TensorId,
) -> Result<TensorId, TensorError> {
    let a = tape.row_gather(table, ids)?;
    let proj = tape.matmul(a, w_proj)?;
    tape.add_row_vec(proj, b_proj)
}

/// Pairwise Pearson correlations between the three sources' comment
/// representations. Each comment is mean-pooled per source over its true
/// length; each source's pooled matrix is reduced to its first principal
/// score before correlating.
#[derive(Debug, Clone)]
pub struct CorrelationReport {
    pub matrix: [[f64; 3]; 3],
    /// True where a source had (numerically) zero variance; its correlations
    /// are NaN.
    pub degenerate: [bool; 3],
}

pub fn source_correlation(
    samples: &[TokenizedSample],
    tables: [(&[f64], usize); 3], // (data, dim) per source
) -> CorrelationReport {
    let n = samples.len();
    let mut scores: Vec<Vec<f64>> = Vec::with_capacity(3);
    let mut degenerate = [false; 3];

    for (si, &(data, dim)) in tables.iter().enumerate() {
        // Mean-pool rows over the true token length.
        let mut pooled = vec![0.0; n * dim];
        for (i, s) in samples.iter().enumerate() {
            let len = s.word_len.max(1);
            for &id in &s.word_ids[..s.word_len] {
                debug_assert_ne!(id, PAD);
                let row = id as usize * dim;
                for j in 0..dim {
                    pooled[i * dim + j] += data[row + j];
                }
            }
            for j in 0..dim {
                pooled[i * dim + j] /= len as f64;
            }
        }
        let (s, degen) = first_principal_score(&pooled, n, dim);
        degenerate[si] = degen;
        scores.push(s);
    }

    let mut matrix = [[f64::NAN; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            matrix[i][j] = if degenerate[i] || degenerate[j] {
                f64::NAN
            } else {
                pearson(&scores[i], &scores[j])
            };
        }
    }
    CorrelationReport { matrix, degenerate }
}

/// Project centered rows onto the leading principal direction found by power
/// iteration. The start vector is drawn from a fixed internal seed and the
/// direction's sign is canonicalized, so results are reproducible.
fn first_principal_score(pooled: &[f64], n: usize, dim: usize) -> (Vec<f64>, bool) {
    let mut mean = vec![0.0; dim];
    for i in 0..n {
        for j in 0..dim {
            mean[j] += pooled[i * dim + j];
        }
    }
    for m in &mut mean {
        *m /= n.max(1) as f64;
    }
    let centered: Vec<f64> = (0..n * dim)
        .map(|k| pooled[k] - mean[k % dim])
        .collect();

    let total_var: f64 = centered.iter().map(|&v| v * v).sum::<f64>() / n.max(1) as f64;
    if total_var < 1e-24 {
        return (vec![0.0; n], true);
    }

    let mut rng = derived_rng(0xC0FF_EE00, Stream::EmbedFill, dim as u64);
    let mut u: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize_vec(&mut u);
    for _ in 0..100 {
        // u <- normalize(Xᵀ (X u))
        let mut xu = vec![0.0; n];
        for i in 0..n {
            xu[i] = (0..dim).map(|j| centered[i * dim + j] * u[j]).sum();
        }
        let mut next = vec![0.0; dim];
        for i in 0..n {
            let c = xu[i];
            for j in 0..dim {
                next[j] += centered[i * dim + j] * c;
            }
        }
        normalize_vec(&mut next);
        let delta: f64 = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).sum();
        u = next;
        if delta < 1e-12 {
            break;
        }
    }
    // Canonical sign: first significantly nonzero component positive.
    if let Some(&lead) = u.iter().find(|c| c.abs() > 1e-12) {
        if lead < 0.0 {
            for c in &mut u {
                *c = -*c;
            }
        }
    }
    let scores = (0..n)
        .map(|i| (0..dim).map(|j| centered[i * dim + j] * u[j]).sum())
        .collect();
    (scores, false)
}

fn normalize_vec(v: &mut [f64]) {
    let norm = v.iter().map(|&a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        for a in v.iter_mut() {
            *a /= norm;
        }
    }
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode, RawComment, Vocabulary};
    use std::io::Write as _;

    fn vocab(words: &[&str]) -> Vocabulary {
        let doubled: Vec<&str> = words.iter().flat_map(|w| [*w, *w]).collect();
        Vocabulary::build(doubled.into_iter(), 2)
    }

    #[test]
    fn pad_row_is_zero_and_fused_pad_vector_is_zero() {
        let v = vocab(&["alpha", "beta"]);
        let dim = 4;
        let ta = random_table(v.len(), dim, 7, 0);
        assert!(ta[..dim].iter().all(|&x| x == 0.0));
        assert!(ta[dim..2 * dim].iter().any(|&x| x != 0.0));

        let mut tape = Tape::new();
        let a = tape.constant(ta.clone(), vec![v.len(), dim]).unwrap();
        let b = tape
            .constant(random_table(v.len(), dim, 7, 1), vec![v.len(), dim])
            .unwrap();
        let c = tape
            .constant(random_table(v.len(), dim, 7, 2), vec![v.len(), dim])
            .unwrap();
        let cat = {
            let ga = tape.row_gather(a, &[0, 4]).unwrap();
            let gb = tape.row_gather(b, &[0, 4]).unwrap();
            let gc = tape.row_gather(c, &[0, 4]).unwrap();
            tape.concat_cols(&[ga, gb, gc]).unwrap()
        };
        let row0 = &tape.value(cat)[..3 * dim];
        assert!(row0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn load_table_overrides_known_tokens_only() {
        let v = vocab(&["alpha", "beta"]);
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "alpha 1.0 2.0 3.0").unwrap();
        writeln!(f, "notinvocab 9.0 9.0 9.0").unwrap();
        let t = load_table(f.path(), &v, 3, 7, 0).unwrap();
        let row = v.id_of("alpha") as usize * 3;
        assert_eq!(&t[row..row + 3], &[1.0, 2.0, 3.0]);
        // beta keeps its seeded fill
        let brow = v.id_of("beta") as usize * 3;
        assert!(t[brow..brow + 3].iter().all(|&x| x.abs() < 0.05 && x != 0.0));
    }

    #[test]
    fn wrong_dimension_reports_line() {
        let v = vocab(&["alpha"]);
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "alpha 1.0 2.0 3.0").unwrap();
        writeln!(f, "alpha 1.0 2.0").unwrap();
        match load_table(f.path(), &v, 3, 7, 0) {
            Err(EmbedError::DimMismatch { line, expected, got, .. }) => {
                assert_eq!((line, expected, got), (2, 3, 2));
            }
            other => panic!("expected DimMismatch, got {other:?}"),
        }
    }

    #[test]
    fn bad_float_reports_line_and_value() {
        let v = vocab(&["alpha"]);
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "alpha 1.0 oops 3.0").unwrap();
        match load_table(f.path(), &v, 3, 7, 0) {
            Err(EmbedError::Parse { line, value, .. }) => {
                assert_eq!(line, 1);
                assert_eq!(value, "oops");
            }
            other => panic!("expected Parse, got {other:?}"),
        }
    }

    fn toy_samples(v: &Vocabulary, texts: &[&str]) -> Vec<TokenizedSample> {
        let chars: Vec<String> = texts
            .iter()
            .flat_map(|t| t.chars().map(|c| c.to_string()))
            .collect();
        let cv = Vocabulary::build(chars.iter().map(String::as_str), 1);
        texts
            .iter()
            .map(|t| {
                encode(
                    &RawComment {
                        id: "x".into(),
                        text: t.to_string(),
                        labels: [0; 6],
                    },
                    v,
                    &cv,
                    8,
                    32,
                )
            })
            .collect()
    }

    #[test]
    fn identical_sources_correlate_perfectly() {
        let v = vocab(&["aa", "bb", "cc", "dd"]);
        let samples = toy_samples(&v, &["aa bb", "cc", "dd aa cc", "bb bb dd"]);
        let dim = 5;
        let ta = random_table(v.len(), dim, 3, 0);
        let tb = ta.clone();
        let tc = random_table(v.len(), dim, 3, 2);
        let rep = source_correlation(&samples, [(&ta, dim), (&tb, dim), (&tc, dim)]);
        assert!((rep.matrix[0][1] - 1.0).abs() < 1e-9, "got {}", rep.matrix[0][1]);
        assert!((rep.matrix[0][0] - 1.0).abs() < 1e-12);
        assert!(!rep.degenerate.iter().any(|&d| d));
    }

    #[test]
    fn independent_random_sources_decorrelate() {
        // Token mixes must be close to isotropic: with a dominant composition
        // axis, any two linear scores of the same mixes correlate no matter
        // how independent the tables are.
        let words: Vec<String> = (0..150u16)
            .map(|i| {
                format!(
                    "w{}{}",
                    (b'a' + (i / 26) as u8) as char,
                    (b'a' + (i % 26) as u8) as char
                )
            })
            .collect();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let v = vocab(&refs);
        let mut rng = derived_rng(41, Stream::EmbedFill, 9);
        let texts: Vec<String> = (0..150)
            .map(|_| {
                (0..8)
                    .map(|_| words[rng.random_range(0..150)].clone())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let trefs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let samples = toy_samples(&v, &trefs);
        let dim = 12;
        let ta = random_table(v.len(), dim, 100, 0);
        let tb = random_table(v.len(), dim, 200, 1);
        let tc = random_table(v.len(), dim, 300, 2);
        let rep = source_correlation(&samples, [(&ta, dim), (&tb, dim), (&tc, dim)]);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!(
                rep.matrix[i][j].abs() < 0.25,
                "independent sources should be near-uncorrelated, got rho[{i}][{j}] = {}",
                rep.matrix[i][j]
            );
        }
    }

    #[test]
    fn zero_variance_source_flags_degenerate() {
        let v = vocab(&["aa", "bb"]);
        let samples = toy_samples(&v, &["aa", "bb", "aa bb", "bb aa"]);
        let dim = 3;
        let constant = vec![0.0; v.len() * dim]; // all rows identical -> no variance
        let tb = random_table(v.len(), dim, 5, 1);
        let tc = random_table(v.len(), dim, 5, 2);
        let rep = source_correlation(&samples, [(&constant, dim), (&tb, dim), (&tc, dim)]);
        assert!(rep.degenerate[0]);
        assert!(rep.matrix[0][1].is_nan());
        assert!(!rep.matrix[1][2].is_nan());
    }
}
