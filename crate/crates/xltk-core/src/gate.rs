//! Similarity gating: each projected token embedding is scaled by
//! σ(β·cos(e, v)) against a learned reference direction v, with β = exp(β_raw)
//! kept positive by construction. Padding positions are forced to zero so
//! they carry neither signal nor gradient.

use crate::rng::{derived_rng, Stream};
use crate::tensor::{Tape, TensorError, TensorId};
use rand::Rng;

pub const NORM_FLOOR: f64 = 1e-6;

/// Tape handles for the gate parameters.
#[derive(Clone, Copy)]
pub struct GateIds {
    /// Reference direction, rank-1 `[proj_dim]`.
    pub v: TensorId,
    /// Log-sharpness scalar, rank-1 `[1]`; β = exp(β_raw).
    pub beta_raw: TensorId,
}

/// Outputs of [`gate_rows`]: the gated embeddings plus the per-row gate and
/// similarity values for reporting.
#[derive(Clone, Copy)]
pub struct Gated {
    /// `[rows × proj_dim]`, m = g ⊙ e with padding rows exactly zero.
    pub gated: TensorId,
    /// `[rows]`, σ(β·sim) masked to zero on padding rows.
    pub gates: TensorId,
    /// `[rows]`, raw cosine similarity (zero-norm rows report 0).
    pub sims: TensorId,
}

/// Apply the gate to a block of row embeddings. `mask` holds 1.0 for real
/// rows and 0.0 for padding.
pub fn gate_rows(
    tape: &mut Tape,
    rows: TensorId,
    gate: GateIds,
    mask: &[f64],
) -> Result<Gated, TensorError> {
    let sims = tape.cosine_sim_rows(rows, gate.v)?;
    let beta = tape.exp(gate.beta_raw)?;
    let scaled = tape.mul_scalar(sims, beta)?;
    let g = tape.sigmoid(scaled)?;
    let m = tape.constant(mask.to_vec(), vec![mask.len()])?;
    let gates = tape.mul(g, m)?;
    let gated = tape.scale_rows(rows, gates)?;
    Ok(Gated { gated, gates, sims })
}

/// Centroid of up to `cap` projected toxic-comment token embeddings, used to
/// start v somewhere meaningful instead of at random. `pooled` holds one
/// mean-pooled row per toxic comment. Falls back to a seeded random direction
/// when no toxic samples exist.
pub fn init_reference(pooled: &[Vec<f64>], dim: usize, cap: usize, seed: u64) -> Vec<f64> {
    let take = pooled.len().min(cap);
    if take == 0 {
        let mut rng = derived_rng(seed, Stream::GateInit, 0);
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.05..0.05)).collect();
        enforce_norm_floor(&mut v);
        return v;
    }
    let mut v = vec![0.0; dim];
    for row in &pooled[..take] {
        for (a, b) in v.iter_mut().zip(row) {
            *a += b;
        }
    }
    for a in &mut v {
        *a /= take as f64;
    }
    enforce_norm_floor(&mut v);
    v
}

/// Keep ‖v‖ from collapsing: rescale up to the floor when small, and replace
/// an exactly-zero vector with a deterministic unit-floor vector. Applied
/// after each optimizer step.
pub fn enforce_norm_floor(v: &mut [f64]) {
    let norm = v.iter().map(|&a| a * a).sum::<f64>().sqrt();
    if norm >= NORM_FLOOR {
        return;
    }
    if norm == 0.0 {
        v[0] = NORM_FLOOR;
        return;
    }
    let s = NORM_FLOOR / norm;
    for a in v.iter_mut() {
        *a *= s;
    }
}

/// How the gate redistributes gradient mass toward minority-class samples.
#[derive(Debug, Clone, Copy)]
pub struct ProbeReport {
    /// Minority share of total per-sample gradient norm, gated model.
    pub gated_share: f64,
    /// Same share for the ungated model.
    pub ungated_share: f64,
    /// gated_share / ungated_share.
    pub ratio: f64,
}

/// Synthetic probe: minority samples cluster around the reference direction,
/// majority samples point elsewhere. A linear head is differentiated through
/// both the gated and ungated paths and the minority share of total gradient
/// mass is compared.
pub fn gate_gradient_probe(dim: usize, n_major: usize, n_minor: usize, beta: f64, seed: u64) -> ProbeReport {
    let mut rng = derived_rng(seed, Stream::GateInit, 1);
    let v: Vec<f64> = {
        let mut raw: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = raw.iter().map(|a| a * a).sum::<f64>().sqrt();
        raw.iter_mut().for_each(|a| *a /= norm);
        raw
    };
    let n = n_major + n_minor;
    let mut rows = vec![0.0; n * dim];
    let mut labels = vec![0.0; n];
    for i in 0..n {
        let minority = i >= n_major;
        labels[i] = if minority { 1.0 } else { 0.0 };
        for j in 0..dim {
            let noise = rng.random_range(-1.0..1.0);
            rows[i * dim + j] = if minority { v[j] + 0.2 * noise } else { noise };
        }
    }
    let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();

    let share = |gated: bool| -> f64 {
        let mut minor_mass = 0.0;
        let mut total_mass = 0.0;
        for i in 0..n {
            let e = &rows[i * dim..(i + 1) * dim];
            let m: Vec<f64> = if gated {
                let en = e.iter().map(|a| a * a).sum::<f64>().sqrt();
                let sim = if en == 0.0 {
                    0.0
                } else {
                    e.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / en
                };
                let g = 1.0 / (1.0 + (-beta * sim).exp());
                e.iter().map(|a| a * g).collect()
            } else {
                e.to_vec()
            };
            let logit: f64 = m.iter().zip(&w).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-logit).exp());
            // ∂BCE_i/∂w = (p − y)·m
            let gnorm = (p - labels[i]).abs() * m.iter().map(|a| a * a).sum::<f64>().sqrt();
            total_mass += gnorm;
            if labels[i] == 1.0 {
                minor_mass += gnorm;
            }
        }
        minor_mass / total_mass
    };

    let gated_share = share(true);
    let ungated_share = share(false);
    ProbeReport {
        gated_share,
        ungated_share,
        ratio: gated_share / ungated_share,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn run_gate(rows: &[f64], n: usize, dim: usize, v: &[f64], beta_raw: f64, mask: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let e = tape.constant(rows.to_vec(), vec![n, dim]).unwrap();
        let vid = tape.leaf(v.to_vec(), vec![dim], true).unwrap();
        let b = tape.leaf(vec![beta_raw], vec![1], true).unwrap();
        let out = gate_rows(&mut tape, e, GateIds { v: vid, beta_raw: b }, mask).unwrap();
        (
            tape.value(out.gated).to_vec(),
            tape.value(out.gates).to_vec(),
            tape.value(out.sims).to_vec(),
        )
    }

    #[test]
    fn padding_rows_are_zeroed() {
        let rows = vec![1.0, 2.0, 3.0, 4.0];
        let v = vec![1.0, 0.0];
        let (gated, gates, _) = run_gate(&rows, 2, 2, &v, 0.0, &[1.0, 0.0]);
        assert!(gated[2..].iter().all(|&x| x == 0.0));
        assert_eq!(gates[1], 0.0);
        assert!(gates[0] > 0.0);
    }

    #[test]
    fn zero_norm_row_gets_half_gate() {
        let rows = vec![0.0, 0.0, 1.0, 0.0];
        let v = vec![1.0, 0.0];
        let (_, gates, sims) = run_gate(&rows, 2, 2, &v, 0.0, &[1.0, 1.0]);
        assert_eq!(sims[0], 0.0);
        assert!((gates[0] - 0.5).abs() < 1e-15); // σ(0)
        assert!((sims[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hard_gating_at_large_beta() {
        // β = exp(β_raw) = 100 acts as a step once |sim| ≥ 0.1.
        let beta_raw = 100.0_f64.ln();
        let v = vec![1.0, 0.0, 0.0];
        let rows = vec![
            1.0, 0.0, 0.0, // sim = 1
            0.3, 0.0, 0.954, // sim ≈ 0.3
            -0.2, 0.0, 0.98, // sim ≈ -0.2
        ];
        let (_, gates, sims) = run_gate(&rows, 3, 3, &v, beta_raw, &[1.0; 3]);
        for (g, s) in gates.iter().zip(&sims) {
            if *s >= 0.1 {
                assert!((g - 1.0).abs() < 1e-3, "sim {s} gate {g}");
            } else if *s <= -0.1 {
                assert!(g.abs() < 1e-3, "sim {s} gate {g}");
            }
        }
    }

    #[test]
    fn gate_derivative_positive_in_similarity() {
        // d/ds σ(βs) = β·σ(βs)(1−σ(βs)) > 0 for every β > 0.
        for &beta in &[0.1, 1.0, 10.0] {
            for &s in &[-1.0, -0.5, 0.0, 0.5, 1.0] {
                let g = sigmoid(beta * s);
                let d = beta * g * (1.0 - g);
                assert!(d > 0.0, "β={beta} sim={s} derivative {d}");
            }
        }
    }

    #[test]
    fn gradient_concentrates_on_minority() {
        let rep = gate_gradient_probe(16, 60, 8, 4.0, 11);
        assert!(
            rep.ratio >= 1.2,
            "expected minority gradient share to grow ≥1.2×, got {:?}",
            rep
        );
        assert!(rep.gated_share <= 1.0 && rep.ungated_share > 0.0);
    }

    #[test]
    fn norm_floor_repairs_collapsed_vectors() {
        let mut tiny = vec![1e-9, 0.0, 0.0];
        enforce_norm_floor(&mut tiny);
        let n = tiny.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!((n - NORM_FLOOR).abs() < 1e-18);

        let mut zero = vec![0.0; 3];
        enforce_norm_floor(&mut zero);
        assert_eq!(zero, vec![NORM_FLOOR, 0.0, 0.0]);

        let mut fine = vec![0.6, 0.8];
        enforce_norm_floor(&mut fine);
        assert_eq!(fine, vec![0.6, 0.8]);
    }

    #[test]
    fn reference_init_is_centroid_with_fallback() {
        let pooled = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let v = init_reference(&pooled, 2, 1000, 3);
        assert_eq!(v, vec![0.5, 0.5]);

        let empty: Vec<Vec<f64>> = Vec::new();
        let f1 = init_reference(&empty, 4, 1000, 3);
        let f2 = init_reference(&empty, 4, 1000, 3);
        assert_eq!(f1, f2);
        assert!(f1.iter().map(|a| a * a).sum::<f64>().sqrt() >= NORM_FLOOR);

        let many: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 0.0]).collect();
        let capped = init_reference(&many, 2, 3, 3);
        assert_eq!(capped, vec![1.0, 0.0]); // mean of first 3 rows only
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gates_stay_in_unit_interval(
            rows in proptest::collection::vec(-5.0f64..5.0, 12),
            v in proptest::collection::vec(-2.0f64..2.0, 4),
            beta_raw in -3.0f64..3.0,
        ) {
            let (_, gates, _) = run_gate(&rows, 3, 4, &v, beta_raw, &[1.0; 3]);
            for g in gates {
                prop_assert!((0.0..=1.0).contains(&g), "gate {g} out of range");
            }
        }

        #[test]
        fn gate_is_scale_invariant_in_the_embedding(
            rows in proptest::collection::vec(0.1f64..3.0, 8),
            scale in 0.1f64..50.0,
            beta_raw in -2.0f64..2.0,
        ) {
            let v = vec![0.7, -0.2, 0.4, 0.1];
            let scaled: Vec<f64> = rows.iter().map(|x| x * scale).collect();
            let (_, g1, s1) = run_gate(&rows, 2, 4, &v, beta_raw, &[1.0; 2]);
            let (_, g2, s2) = run_gate(&scaled, 2, 4, &v, beta_raw, &[1.0; 2]);
            for i in 0..2 {
                prop_assert!((s1[i] - s2[i]).abs() < 1e-9);
                prop_assert!((g1[i] - g2[i]).abs() < 1e-9);
            }
        }
    }
}
