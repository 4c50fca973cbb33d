//! Stratified train/valid/test partitioning keyed on the full label
//! combination, with rare combinations pooled so every stratum is big enough
//! to allocate proportionally.

use super::{DataError, RawComment};
use crate::rng::{derived_rng, Stream};
use rand::seq::SliceRandom;
use std::collections::BTreeMap;

/// Pool stratum id for label combinations rarer than the threshold.
const POOLED: u16 = 1 << 7;

#[derive(Debug, Clone)]
pub struct SplitSpec {
    /// Train/valid/test fractions; must sum to 1.
    pub fractions: [f64; 3],
    pub seed: u64,
    /// Label combinations with fewer samples than this are pooled into one
    /// stratum (in practice these are the rare toxic combinations).
    pub min_stratum: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            fractions: [0.8, 0.1, 0.1],
            seed: 0,
            min_stratum: 10,
        }
    }
}

/// Index sets into the original corpus, disjoint and exhaustive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partition `samples` by the spec. Deterministic for a given seed: strata
/// are visited in key order and shuffled with per-stratum derived RNGs.
pub fn stratified_split(samples: &[RawComment], spec: &SplitSpec) -> Result<Splits, DataError> {
    if samples.len() < 10 {
        return Err(DataError::TooFewSamples(samples.len()));
    }
    let sum: f64 = spec.fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || spec.fractions.iter().any(|&f| f < 0.0) {
        return Err(DataError::BadFractions(spec.fractions));
    }

    // Count combinations, then bucket indices with rare combos pooled.
    let mut combo_counts: BTreeMap<u8, usize> = BTreeMap::new();
    for s in samples {
        *combo_counts.entry(s.label_key()).or_insert(0) += 1;
    }
    let mut strata: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        let key = s.label_key();
        let stratum = if combo_counts[&key] < spec.min_stratum {
            POOLED
        } else {
            key as u16
        };
        strata.entry(stratum).or_default().push(i);
    }

    let mut out = Splits {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
    };
    for (&key, members) in &mut strata {
        let mut rng = derived_rng(spec.seed, Stream::Split, key as u64);
        members.shuffle(&mut rng);

        // Largest-remainder allocation: floors first, leftovers to the
        // largest fractional parts (ties broken by split order).
        let n = members.len();
        let exact: Vec<f64> = spec.fractions.iter().map(|f| f * n as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
        let mut leftover = n - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        for &slot in order.iter().cycle() {
            if leftover == 0 {
                break;
            }
            counts[slot] += 1;
            leftover -= 1;
        }

        let (a, b) = (counts[0], counts[0] + counts[1]);
        out.train.extend_from_slice(&members[..a]);
        out.valid.extend_from_slice(&members[a..b]);
        out.test.extend_from_slice(&members[b..]);
    }
    out.train.sort_unstable();
    out.valid.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}
