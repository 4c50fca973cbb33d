//! Multi-label evaluation: per-category precision/recall/F1, macro and micro
//! aggregates, exact-match ratio, Hamming loss, percentile bootstrap
//! intervals, and a paired Student-t test with a self-contained regularized
//! incomplete beta.

use crate::data::NUM_LABELS;
use crate::rng::{derived_rng, Stream};
use rand::Rng;

pub type LabelVec = [u8; NUM_LABELS];

#[derive(Debug, Clone, Copy)]
pub struct CategoryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold-positive count.
    pub support: usize,
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub per_category: Vec<CategoryMetrics>,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub exact_match: f64,
    pub hamming_loss: f64,
}

/// Apply a decision threshold to flat `rows × NUM_LABELS` probabilities.
pub fn threshold_probs(probs: &[f64], rows: usize, threshold: f64) -> Vec<LabelVec> {
    (0..rows)
        .map(|i| {
            let mut l = [0u8; NUM_LABELS];
            for (k, slot) in l.iter_mut().enumerate() {
                *slot = (probs[i * NUM_LABELS + k] >= threshold) as u8;
            }
            l
        })
        .collect()
}

/// Count-based divisions define 0/0 as 0, except a category with no gold and
/// no predicted positives, which scores a perfect 1 (nothing to find, nothing
/// claimed).
pub fn evaluate(pred: &[LabelVec], gold: &[LabelVec]) -> MetricsReport {
    assert_eq!(pred.len(), gold.len(), "prediction/gold length mismatch");
    let n = pred.len();
    let mut tp = [0usize; NUM_LABELS];
    let mut fp = [0usize; NUM_LABELS];
    let mut fneg = [0usize; NUM_LABELS];
    let mut exact = 0usize;
    let mut wrong_slots = 0usize;
    for (p, g) in pred.iter().zip(gold) {
        if p == g {
            exact += 1;
        }
        for k in 0..NUM_LABELS {
            match (p[k], g[k]) {
                (1, 1) => tp[k] += 1,
                (1, 0) => fp[k] += 1,
                (0, 1) => fneg[k] += 1,
                _ => {}
            }
            if p[k] != g[k] {
                wrong_slots += 1;
            }
        }
    }

    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let f1_of = |p: f64, r: f64| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };

    let per_category: Vec<CategoryMetrics> = (0..NUM_LABELS)
        .map(|k| {
            if tp[k] + fp[k] + fneg[k] == 0 {
                return CategoryMetrics {
                    precision: 1.0,
                    recall: 1.0,
                    f1: 1.0,
                    support: 0,
                };
            }
            let precision = ratio(tp[k], tp[k] + fp[k]);
            let recall = ratio(tp[k], tp[k] + fneg[k]);
            CategoryMetrics {
                precision,
                recall,
                f1: f1_of(precision, recall),
                support: tp[k] + fneg[k],
            }
        })
        .collect();

    let macro_f1 = per_category.iter().map(|c| c.f1).sum::<f64>() / NUM_LABELS as f64;
    let (stp, sfp, sfn) = (
        tp.iter().sum::<usize>(),
        fp.iter().sum::<usize>(),
        fneg.iter().sum::<usize>(),
    );
    let micro_precision = ratio(stp, stp + sfp);
    let micro_recall = ratio(stp, stp + sfn);
    let micro_f1 = f1_of(micro_precision, micro_recall);

    MetricsReport {
        per_category,
        macro_f1,
        micro_precision,
        micro_recall,
        micro_f1,
        exact_match: ratio(exact, n),
        hamming_loss: ratio(wrong_slots, n * NUM_LABELS),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BootstrapCi {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
}

/// Percentile bootstrap (2.5%/97.5%) of an arbitrary metric. Every replicate
/// draws its resample from a seed derived from `seed` and the replicate
/// index, so intervals are reproducible regardless of iteration order.
pub fn bootstrap_ci(
    pred: &[LabelVec],
    gold: &[LabelVec],
    iterations: usize,
    seed: u64,
    metric: impl Fn(&[LabelVec], &[LabelVec]) -> f64,
) -> BootstrapCi {
    let n = pred.len();
    assert!(n > 0 && iterations > 0);
    let point = metric(pred, gold);
    let mut values = Vec::with_capacity(iterations);
    let mut rp = Vec::with_capacity(n);
    let mut rg = Vec::with_capacity(n);
    for rep in 0..iterations {
        let mut rng = derived_rng(seed, Stream::Bootstrap, rep as u64);
        rp.clear();
        rg.clear();
        for _ in 0..n {
            let idx = rng.random_range(0..n);
            rp.push(pred[idx]);
            rg.push(gold[idx]);
        }
        values.push(metric(&rp, &rg));
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
    BootstrapCi {
        point,
        lower: percentile(&values, 2.5),
        upper: percentile(&values, 97.5),
        iterations,
    }
}

/// Paired difference (a − b) bootstrap: both systems are resampled on the
/// same indices each replicate.
pub fn paired_bootstrap_diff(
    pred_a: &[LabelVec],
    pred_b: &[LabelVec],
    gold: &[LabelVec],
    iterations: usize,
    seed: u64,
    metric: impl Fn(&[LabelVec], &[LabelVec]) -> f64,
) -> BootstrapCi {
    let n = gold.len();
    assert_eq!(pred_a.len(), n);
    assert_eq!(pred_b.len(), n);
    let point = metric(pred_a, gold) - metric(pred_b, gold);
    let mut values = Vec::with_capacity(iterations);
    let (mut ra, mut rb, mut rg) = (Vec::new(), Vec::new(), Vec::new());
    for rep in 0..iterations {
        let mut rng = derived_rng(seed, Stream::Bootstrap, rep as u64);
        ra.clear();
        rb.clear();
        rg.clear();
        for _ in 0..n {
            let idx = rng.random_range(0..n);
            ra.push(pred_a[idx]);
            rb.push(pred_b[idx]);
            rg.push(gold[idx]);
        }
        values.push(metric(&ra, &rg) - metric(&rb, &rg));
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
    BootstrapCi {
        point,
        lower: percentile(&values, 2.5),
        upper: percentile(&values, 97.5),
        iterations,
    }
}

/// Nearest-rank percentile on a sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

#[derive(Debug, Clone, Copy)]
pub struct PairedTTest {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub df: usize,
}

/// Two-sided paired Student-t test on matched score series. A zero-variance
/// difference collapses to the sentinel (t = ±∞, p = 0) when the means
/// differ, and to (t = 0, p = 1) when they are identical.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> PairedTTest {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    assert!(n >= 2, "need at least two pairs");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 {
        return if mean == 0.0 {
            PairedTTest { t: 0.0, p: 1.0, df }
        } else {
            PairedTTest {
                t: mean.signum() * f64::INFINITY,
                p: 0.0,
                df,
            }
        };
    }
    let t = mean / (var / n as f64).sqrt();
    PairedTTest {
        t,
        p: student_t_two_sided_p(t, df as f64),
        df,
    }
}

/// p = I_{ν/(ν+t²)}(ν/2, 1/2) — exact two-sided tail mass of Student's t.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    reg_inc_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Regularized incomplete beta I_x(a, b), by the symmetric continued
/// fraction evaluated with modified Lentz iteration.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "shape parameters must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The continued fraction converges fast only for x below the mean; use
    // the reflection I_x(a,b) = 1 − I_{1−x}(b,a) otherwise.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, 9 terms), accurate to ~1e-15 for x > 0.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection keeps small arguments accurate.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEF.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
