//! Seeded synthetic-corpus generator: imbalanced multilabel comments with
//! planted per-category token patterns, so the whole pipeline can be
//! exercised end to end without any external dataset.

use crate::data::{RawComment, NUM_LABELS};
use crate::rng::{derived_rng, Stream};
use rand::Rng;

/// Category marker words: invented, alphabetic-only, with doubled letters so
/// the character branch has something to latch onto. One list per category,
/// aligned with the label order.
pub const MARKERS: [[&str; 2]; NUM_LABELS] = [
    ["grumzz", "blorrak"],   // toxic
    ["vekkra", "snarrgul"],  // severe_toxic
    ["zoppit", "cruddal"],   // obscene
    ["thrakka", "dreffin"],  // threat
    ["sniddle", "plommert"], // insult
    ["quabbix", "vursska"],  // identity_hate
];

/// Per-category positive rates, in label order.
pub const PREVALENCE: [f64; NUM_LABELS] = [0.046, 0.003, 0.053, 0.002, 0.050, 0.009];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    pub prevalence: [f64; NUM_LABELS],
    /// Comment length range in tokens (inclusive).
    pub t_min: usize,
    pub t_max: usize,
    /// Size of the benign filler vocabulary.
    pub benign_vocab: usize,
    /// Markers planted per active category.
    pub markers_per_positive: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 5000,
            seed: 17,
            prevalence: PREVALENCE,
            t_min: 6,
            t_max: 18,
            benign_vocab: 240,
            markers_per_positive: 2,
        }
    }
}

/// Deterministic pseudo-word: three syllables from a fixed table.
fn benign_word(i: usize) -> String {
    const SYL: [&str; 12] = [
        "ba", "de", "ki", "lo", "mu", "na", "po", "ri", "su", "ta", "ve", "zo",
    ];
    format!("{}{}{}", SYL[(i / 144) % 12], SYL[(i / 12) % 12], SYL[i % 12])
}

/// Generate `cfg.n` comments. Labels are independent per-category Bernoulli
/// draws at the configured prevalence; each active category plants
/// `markers_per_positive` of its marker words over a benign-filler base.
/// Tokens are lowercase alphabetic only, so normalization passes them
/// through untouched.
pub fn generate(cfg: &SynthConfig) -> Vec<RawComment> {
    let mut rng = derived_rng(cfg.seed, Stream::Synthetic, 0);
    let (t_min, t_max) = (cfg.t_min.max(1), cfg.t_max.max(cfg.t_min.max(1)));
    let mut out = Vec::with_capacity(cfg.n);
    for idx in 0..cfg.n {
        let mut labels = [0u8; NUM_LABELS];
        for (k, slot) in labels.iter_mut().enumerate() {
            *slot = rng.random_bool(cfg.prevalence[k]) as u8;
        }
        let actives = labels.iter().filter(|&&y| y == 1).count();
        let needed = actives * cfg.markers_per_positive;
        let len = rng.random_range(t_min..=t_max).max(needed.max(1));
        let mut tokens: Vec<String> = (0..len)
            .map(|_| benign_word(rng.random_range(0..cfg.benign_vocab.max(1))))
            .collect();
        if needed > 0 {
            // Choose distinct slots for the markers, then overwrite.
            let mut slots: Vec<usize> = (0..len).collect();
            for i in 0..needed {
                let j = rng.random_range(i..len);
                slots.swap(i, j);
            }
            let mut cursor = 0;
            for (k, &y) in labels.iter().enumerate() {
                if y == 0 {
                    continue;
                }
                for _ in 0..cfg.markers_per_positive {
                    let word = MARKERS[k][rng.random_range(0..MARKERS[k].len())];
                    tokens[slots[cursor]] = word.to_string();
                    cursor += 1;
                }
            }
        }
        out.push(RawComment {
            id: format!("syn{idx:06}"),
            text: tokens.join(" "),
            labels,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::normalize;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            n: 200,
            ..SynthConfig::default()
        };
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.len(), 200);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.text, y.text);
            assert_eq!(x.labels, y.labels);
        }
        let c = generate(&SynthConfig { seed: 18, ..cfg });
        assert!(a.iter().zip(&c).any(|(x, y)| x.text != y.text));
    }

    #[test]
    fn prevalence_lands_near_the_targets() {
        let cfg = SynthConfig::default();
        let rows = generate(&cfg);
        for k in 0..NUM_LABELS {
            let got = rows.iter().filter(|r| r.labels[k] == 1).count() as f64;
            let want = cfg.prevalence[k] * cfg.n as f64;
            let sd = (cfg.prevalence[k] * (1.0 - cfg.prevalence[k]) * cfg.n as f64).sqrt();
            assert!(
                (got - want).abs() <= 3.5 * sd + 1.0,
                "category {k}: {got} positives, expected ~{want}"
            );
            // Rare categories still need enough members to split and learn.
            assert!(got >= 2.0, "category {k} nearly empty");
        }
    }

    #[test]
    fn markers_mark_and_benign_stays_clean() {
        let rows = generate(&SynthConfig {
            n: 1500,
            ..SynthConfig::default()
        });
        for r in &rows {
            let tokens: Vec<&str> = r.text.split(' ').collect();
            for k in 0..NUM_LABELS {
                let hits = tokens
                    .iter()
                    .filter(|t| MARKERS[k].contains(&t.trim()))
                    .count();
                if r.labels[k] == 1 {
                    assert!(hits >= 1, "positive {k} lacks its marker: {}", r.text);
                } else {
                    assert_eq!(hits, 0, "negative {k} contains marker: {}", r.text);
                }
            }
        }
    }

    #[test]
    fn tokens_survive_normalization_unchanged() {
        let rows = generate(&SynthConfig {
            n: 300,
            ..SynthConfig::default()
        });
        for r in &rows {
            assert_eq!(normalize(&r.text), r.text, "normalization rewrote {}", r.text);
            assert!(r
                .text
                .split(' ')
                .all(|t| !t.is_empty() && t.chars().all(|c| c.is_ascii_lowercase())));
        }
    }

    #[test]
    fn csv_round_trips_through_the_loader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synth.csv");
        let rows = generate(&SynthConfig {
            n: 120,
            ..SynthConfig::default()
        });
        crate::data::write_csv(&path, &rows).unwrap();
        let back = crate::data::load_csv(&path).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.text, b.text);
            assert_eq!(a.labels, b.labels);
        }
    }

    #[test]
    fn marker_lists_stay_disjoint_from_filler() {
        let fillers: Vec<String> = (0..2000).map(benign_word).collect();
        for list in MARKERS {
            for m in list {
                assert!(!fillers.iter().any(|f| f == m), "{m} collides with filler");
            }
        }
        // And between categories.
        for i in 0..NUM_LABELS {
            for j in (i + 1)..NUM_LABELS {
                for m in MARKERS[i] {
                    assert!(!MARKERS[j].contains(&m));
                }
            }
        }
    }
}
