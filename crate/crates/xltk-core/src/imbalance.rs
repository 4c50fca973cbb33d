//! Tools for the label imbalance: rarity-derived class weights, a focused
//! binary loss that damps well-classified examples, and minority
//! oversampling by interpolation in representation space.

use crate::data::NUM_LABELS;
use crate::tensor::{Tape, TensorError, TensorId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Additive floor on the raw 1 − ρ_k rarity terms. The most frequent class
/// has ρ = 1 exactly, so without a floor its weight — and with it every
/// positive-example gradient for that class — would vanish.
pub const ALPHA_FLOOR: f64 = 0.05;

/// Per-class weights α_k ∝ (1 − ρ_k) + [`ALPHA_FLOOR`] with ρ_k = N_k/N_max,
/// normalized to sum to one.
///
/// Weights are strictly positive and ordered strictly inversely to the count
/// ratios. All-equal counts degenerate to uniform weights, and zero counts
/// are substituted with one (flagged) so the ratios stay defined.
#[derive(Debug, Clone)]
pub struct ClassWeights {
    /// Count ratios N_k / N_max after substitution, each in (0, 1].
    pub rho: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Classes whose count was zero and got substituted.
    pub substituted: Vec<usize>,
}

pub fn class_weights(counts: &[usize]) -> ClassWeights {
    let mut substituted = Vec::new();
    let counts: Vec<usize> = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            if c == 0 {
                substituted.push(k);
                1
            } else {
                c
            }
        })
        .collect();
    let n_max = *counts.iter().max().expect("at least one class") as f64;
    let rho: Vec<f64> = counts.iter().map(|&c| c as f64 / n_max).collect();
    let raw: Vec<f64> = rho.iter().map(|r| 1.0 - r + ALPHA_FLOOR).collect();
    let z: f64 = raw.iter().sum();
    let alpha = raw.iter().map(|r| r / z).collect();
    ClassWeights {
        rho,
        alpha,
        substituted,
    }
}

/// Build the class-weighted focal loss on the tape:
///
///   L = −(1/N) Σ_i Σ_k [ α_k (1−p)^γ y ln p + (1−α_k) p^γ (1−y) ln(1−p) ]
///
/// `probs` is `[N × K]`; `labels` is flat 0.0/1.0 of the same size; `alpha`
/// has length K. Probabilities are clamped away from {0, 1} before the logs.
pub fn focal_loss(
    tape: &mut Tape,
    probs: TensorId,
    labels: &[f64],
    alpha: &[f64],
    gamma: f64,
) -> Result<TensorId, TensorError> {
    let shape = tape.shape(probs).to_vec();
    let (n, k) = (shape[0], shape[1]);
    debug_assert_eq!(labels.len(), n * k);
    debug_assert_eq!(alpha.len(), k);

    let p = tape.clamp(probs, 1e-12, 1.0 - 1e-12)?;
    let y = tape.constant(labels.to_vec(), vec![n, k])?;
    let ones = tape.constant(vec![1.0; n * k], vec![n, k])?;
    let one_minus_p = tape.sub(ones, p)?;
    let one_minus_y: Vec<f64> = labels.iter().map(|&v| 1.0 - v).collect();
    let one_minus_y = tape.constant(one_minus_y, vec![n, k])?;
    let a = tape.constant(alpha.to_vec(), vec![k])?;
    let one_minus_a: Vec<f64> = alpha.iter().map(|&v| 1.0 - v).collect();
    let one_minus_a = tape.constant(one_minus_a, vec![k])?;

    // Positive term: α_k (1−p)^γ y ln p
    let focus_pos = tape.pow_const(one_minus_p, gamma)?;
    let ln_p = tape.ln(p)?;
    let pos = tape.mul(focus_pos, ln_p)?;
    let pos = tape.mul(pos, y)?;
    let pos = tape.mul_row_vec(pos, a)?;

    // Negative term: (1−α_k) p^γ (1−y) ln(1−p)
    let focus_neg = tape.pow_const(p, gamma)?;
    let ln_q = tape.ln(one_minus_p)?;
    let neg = tape.mul(focus_neg, ln_q)?;
    let neg = tape.mul(neg, one_minus_y)?;
    let neg = tape.mul_row_vec(neg, one_minus_a)?;

    let total = tape.add(pos, neg)?;
    let sum = tape.sum_all(total)?;
    tape.scale(sum, -1.0 / n as f64)
}

/// Plain mean binary cross-entropy over the same layout, for the loss
/// ablation.
pub fn bce_loss(tape: &mut Tape, probs: TensorId, labels: &[f64]) -> Result<TensorId, TensorError> {
    let shape = tape.shape(probs).to_vec();
    let (_n, k) = (shape[0], shape[1]);
    let uniform = vec![0.5; k];
    let half = focal_loss(tape, probs, labels, &uniform, 0.0)?;
    tape.scale(half, 2.0)
}

/// Why an oversampling request produced fewer rows than asked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoteWarning {
    /// Fewer than two minority samples: interpolation is impossible.
    PoolTooSmall,
}

/// How many synthetic minority rows a batch needs so the minority reaches
/// `ratio` × majority (1:2 at the default 0.5), capped and never negative.
pub fn synthetic_count(n_minority: usize, n_majority: usize, cap: usize, ratio: f64) -> usize {
    ((n_majority as f64 * ratio).floor() as usize)
        .saturating_sub(n_minority)
        .min(cap)
}

/// Interpolate `n_synthetic` rows between uniformly drawn minority
/// representations and their k = min(k_cap, n−1) nearest neighbours
/// (Euclidean, brute force). Returns the base row index for each synthetic so
/// labels can be copied from it.
pub fn smote_rows(
    reps: &[Vec<f64>],
    n_synthetic: usize,
    k_cap: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<(usize, Vec<f64>)>, Option<SmoteWarning>) {
    let n = reps.len();
    if n < 2 {
        return (Vec::new(), (n_synthetic > 0).then_some(SmoteWarning::PoolTooSmall));
    }
    let k = k_cap.clamp(1, n - 1);
    // All pairwise distances; n is a per-batch minority count, so brute force
    // stays cheap.
    let mut neighbours: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut dist: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d: f64 = reps[i]
                    .iter()
                    .zip(&reps[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d, j)
            })
            .collect();
        dist.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        neighbours.push(dist[..k].iter().map(|&(_, j)| j).collect());
    }
    let mut out = Vec::with_capacity(n_synthetic);
    for _ in 0..n_synthetic {
        let base = rng.random_range(0..n);
        let nb = neighbours[base][rng.random_range(0..k)];
        let lambda: f64 = rng.random_range(0.0..1.0);
        let row: Vec<f64> = reps[base]
            .iter()
            .zip(&reps[nb])
            .map(|(a, b)| a + lambda * (b - a))
            .collect();
        out.push((base, row));
    }
    (out, None)
}

/// Indices of samples carrying any positive label (the oversampling pool).
pub fn minority_pool(labels: &[[u8; NUM_LABELS]]) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.iter().any(|&y| y == 1))
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derived_rng, Stream};

    #[test]
    fn class_weights_match_hand_computed_values() {
        // Exact-rational oracle: N_max = 53, raw_k = 1 − N_k/53 + 0.05,
        // α_k = raw_k / Σ raw.
        let w = class_weights(&[46, 3, 53, 2, 50, 9]);
        let expected = [
            0.056465769455822115,
            0.3080748976009362,
            0.0155061439438268,
            0.3139262726740784,
            0.033060269163253365,
            0.2729666471620831,
        ];
        for (a, e) in w.alpha.iter().zip(&expected) {
            assert!((a - e).abs() < 1e-15, "{a} vs {e}");
        }
        assert!((w.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((w.rho[2] - 1.0).abs() < 1e-15);
        assert!(w.substituted.is_empty());
    }

    #[test]
    fn most_frequent_class_gets_the_minimum_positive_weight() {
        let w = class_weights(&[10, 100, 10]);
        assert!(w.alpha[1] > 0.0, "weights must stay positive");
        assert!(w.alpha[1] < w.alpha[0] && w.alpha[1] < w.alpha[2]);
    }

    #[test]
    fn equal_counts_degenerate_to_uniform() {
        let w = class_weights(&[7, 7, 7, 7, 7, 7]);
        for a in &w.alpha {
            assert!((a - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_counts_are_substituted_and_flagged() {
        let w = class_weights(&[0, 5, 10]);
        assert_eq!(w.substituted, vec![0]);
        assert!(w.alpha[0] > w.alpha[1]);
        assert!(w.alpha.iter().all(|a| a.is_finite()));
    }

    #[test]
    fn focal_single_point_matches_analytic_value() {
        // One sample, one class, y = 1, p = 0.9, γ = 2, α = 1:
        // L = −(0.1)²·ln(0.9) = 1.0536051565782629e-3.
        let mut tape = Tape::new();
        let p = tape.leaf(vec![0.9], vec![1, 1], true).unwrap();
        let loss = focal_loss(&mut tape, p, &[1.0], &[1.0], 2.0).unwrap();
        assert!((tape.value(loss)[0] - 1.0536051565782629e-3).abs() < 1e-15);
    }

    #[test]
    fn zero_gamma_half_alpha_is_half_bce() {
        let mut rng = derived_rng(5, Stream::Smote, 0);
        for _ in 0..1000 {
            let n = rng.random_range(1..6);
            let probs: Vec<f64> = (0..n * NUM_LABELS)
                .map(|_| rng.random_range(0.01..0.99))
                .collect();
            let labels: Vec<f64> = (0..n * NUM_LABELS)
                .map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 })
                .collect();
            let mut tape = Tape::new();
            let p = tape.leaf(probs.clone(), vec![n, NUM_LABELS], true).unwrap();
            let alpha = vec![0.5; NUM_LABELS];
            let focal = focal_loss(&mut tape, p, &labels, &alpha, 0.0).unwrap();
            let got = tape.value(focal)[0];

            let brute: f64 = -probs
                .iter()
                .zip(&labels)
                .map(|(&p, &y)| 0.5 * (y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
                .sum::<f64>()
                / n as f64;
            assert!((got - brute).abs() < 1e-12, "{got} vs {brute}");
        }
    }

    #[test]
    fn bce_ablation_is_plain_mean_cross_entropy() {
        let mut tape = Tape::new();
        let p = tape.leaf(vec![0.8, 0.3], vec![1, 2], true).unwrap();
        let loss = bce_loss(&mut tape, p, &[1.0, 0.0]).unwrap();
        let expected = -(0.8f64.ln() + 0.7f64.ln());
        assert!((tape.value(loss)[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn focal_loss_gradient_decreases_loss() {
        // One gradient step on the probabilities should reduce the loss.
        let mut tape = Tape::new();
        let probs = vec![0.3, 0.7, 0.5, 0.2, 0.6, 0.4];
        let labels = vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        let p = tape.leaf(probs.clone(), vec![1, 6], true).unwrap();
        let alpha = vec![1.0 / 6.0; 6];
        let loss = focal_loss(&mut tape, p, &labels, &alpha, 2.0).unwrap();
        let before = tape.value(loss)[0];
        tape.backward(loss).unwrap();
        let g = tape.grad(p).unwrap().to_vec();

        let stepped: Vec<f64> = probs.iter().zip(&g).map(|(v, d)| v - 0.05 * d).collect();
        let mut tape = Tape::new();
        let p = tape.leaf(stepped, vec![1, 6], true).unwrap();
        let loss = focal_loss(&mut tape, p, &labels, &alpha, 2.0).unwrap();
        assert!(tape.value(loss)[0] < before);
    }

    #[test]
    fn synthetic_count_targets_the_requested_ratio() {
        assert_eq!(synthetic_count(10, 60, 64, 0.5), 20);
        assert_eq!(synthetic_count(40, 60, 64, 0.5), 0); // already past 1:2
        assert_eq!(synthetic_count(0, 200, 64, 0.5), 64); // capped
        assert_eq!(synthetic_count(5, 0, 64, 0.5), 0);
        assert_eq!(synthetic_count(10, 60, 64, 1.0), 50); // 1:1 target
        assert_eq!(synthetic_count(10, 45, 999, 0.5), 12); // floor(22.5) - 10
    }

    #[test]
    fn smote_rows_interpolate_between_known_points() {
        let reps = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ];
        let mut rng = derived_rng(2, Stream::Smote, 1);
        let (rows, warn) = smote_rows(&reps, 50, 5, &mut rng);
        assert!(warn.is_none());
        assert_eq!(rows.len(), 50);
        for (base, row) in &rows {
            // Each synthetic must sit on a segment between its base and one
            // of the other points: residual from the best segment ≈ 0.
            let b = &reps[*base];
            let on_some_segment = reps.iter().enumerate().filter(|(j, _)| j != base).any(|(_, nb)| {
                let seg: Vec<f64> = nb.iter().zip(b).map(|(x, y)| x - y).collect();
                let rel: Vec<f64> = row.iter().zip(b).map(|(x, y)| x - y).collect();
                let seg_norm2: f64 = seg.iter().map(|x| x * x).sum();
                let lambda = rel.iter().zip(&seg).map(|(a, c)| a * c).sum::<f64>() / seg_norm2;
                let residual: f64 = rel
                    .iter()
                    .zip(&seg)
                    .map(|(a, c)| a - lambda * c)
                    .map(|x| x * x)
                    .sum::<f64>()
                    .sqrt();
                residual < 1e-9 && (-1e-9..=1.0 + 1e-9).contains(&lambda)
            });
            assert!(on_some_segment, "synthetic {row:?} off every segment");
        }
        // Uniform base draws should touch every pool member over 50 pulls.
        for b in 0..reps.len() {
            assert!(rows.iter().any(|(base, _)| *base == b), "base {b} never drawn");
        }
    }

    #[test]
    fn neighbour_cap_of_one_pins_the_nearest_point() {
        // 0 and 0.1 are mutual nearest neighbours; 10 is far away.
        let reps = vec![vec![0.0], vec![0.1], vec![10.0]];
        let mut rng = derived_rng(2, Stream::Smote, 7);
        let (rows, _) = smote_rows(&reps, 40, 1, &mut rng);
        for (base, row) in rows {
            let (lo, hi) = match base {
                0 => (0.0, 0.1),
                1 => (0.0, 0.1),
                _ => (0.1, 10.0), // nearest to 10 is 0.1
            };
            assert!(
                row[0] >= lo - 1e-12 && row[0] <= hi + 1e-12,
                "base {base} row {row:?}"
            );
        }
    }

    #[test]
    fn smote_pool_of_one_warns_and_yields_nothing() {
        let reps = vec![vec![1.0, 2.0]];
        let mut rng = derived_rng(2, Stream::Smote, 2);
        let (rows, warn) = smote_rows(&reps, 4, 5, &mut rng);
        assert!(rows.is_empty());
        assert_eq!(warn, Some(SmoteWarning::PoolTooSmall));
        let (rows, warn) = smote_rows(&reps, 0, 5, &mut rng);
        assert!(rows.is_empty());
        assert!(warn.is_none());
    }

    #[test]
    fn minority_pool_picks_any_positive() {
        let labels = [
            [0, 0, 0, 0, 0, 0],
            [1, 0, 0, 0, 0, 0],
            [0, 0, 0, 0, 0, 1],
            [0, 0, 0, 0, 0, 0],
        ];
        assert_eq!(minority_pool(&labels), vec![1, 2]);
    }

    #[test]
    fn smote_is_deterministic_per_seed() {
        let reps: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![i as f64, (i * i) as f64 * 0.1, 1.0 - i as f64 * 0.05])
            .collect();
        let mut r1 = derived_rng(9, Stream::Smote, 3);
        let mut r2 = derived_rng(9, Stream::Smote, 3);
        let (a, _) = smote_rows(&reps, 12, 5, &mut r1);
        let (b, _) = smote_rows(&reps, 12, 5, &mut r2);
        assert_eq!(a, b);
    }
}
