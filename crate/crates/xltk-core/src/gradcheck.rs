//! Finite-difference verification of every tape op plus the composite blocks
//! the model is assembled from.
//!
//! Each case builds a graph from seeded random inputs, reduces the output to
//! a scalar through a fixed random projection (so adjoint directions are
//! distinct), then compares the taped gradient of every input element with a
//! central difference. Linear ops must agree to 1e-6, everything else to 1e-4.

use crate::rng::{derived_rng, Stream};
use crate::tensor::{Tape, TensorError, TensorId};
use rand::Rng;

pub const DEFAULT_TOL: f64 = 1e-4;
pub const LINEAR_TOL: f64 = 1e-6;

/// Outcome of one finite-difference case.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub name: String,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
    pub note: Option<String>,
}

/// Where to sample a case's input values, chosen to keep finite differences
/// away from kinks (relu, clamp) and domain edges (ln, pow).
#[derive(Clone, Copy, Debug)]
enum Domain {
    /// Uniform(-1, 1)
    Symmetric,
    /// Uniform(0.1, 1.1) — strictly positive
    Positive,
    /// Uniform(0.05, 0.95) — valid probabilities, interior of any clamp
    Probability,
    /// |x| in (0.2, 1.2) — keeps a 1e-5 step on one side of a kink at 0
    AwayFromZero,
}

impl Domain {
    fn sample(self, rng: &mut impl Rng) -> f64 {
        match self {
            Domain::Symmetric => rng.random_range(-1.0..1.0),
            Domain::Positive => rng.random_range(0.1..1.1),
            Domain::Probability => rng.random_range(0.05..0.95),
            Domain::AwayFromZero => {
                let mag: f64 = rng.random_range(0.2..1.2);
                if rng.random_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            }
        }
    }
}

type BuildFn = Box<dyn Fn(&mut Tape, &[TensorId]) -> Result<TensorId, TensorError>>;

struct Case {
    name: &'static str,
    tol: f64,
    inputs: Vec<(Vec<usize>, Domain)>,
    build: BuildFn,
}

fn rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1e-6)
}

/// Run one case: build, backward, then central differences per element.
/// `corrupt` deliberately scales the first analytic gradient element, which
/// must make the case fail — it proves the harness can catch a bad adjoint.
fn run_case(case: &Case, seed: u64, index: u64, corrupt: bool) -> GradReport {
    let mut rng = derived_rng(seed, Stream::ParamInit, index);
    let inputs: Vec<Vec<f64>> = case
        .inputs
        .iter()
        .map(|(shape, dom)| {
            (0..shape.iter().product::<usize>())
                .map(|_| dom.sample(&mut rng))
                .collect()
        })
        .collect();
    // Fixed projection weights with magnitude bounded away from zero.
    let mut wrng = derived_rng(seed, Stream::ParamInit, index + 10_000);
    let mut proj: Option<Vec<f64>> = None;

    let mut eval = |datas: &[Vec<f64>]| -> Result<(f64, Option<Vec<Vec<f64>>>), String> {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = datas
            .iter()
            .zip(&case.inputs)
            .map(|(d, (shape, _))| tape.leaf(d.clone(), shape.clone(), true))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let out = (case.build)(&mut tape, &ids).map_err(|e| e.to_string())?;
        let w = proj.get_or_insert_with(|| {
            (0..tape.tensor(out).len())
                .map(|_| {
                    let mag: f64 = wrng.random_range(0.3..1.0);
                    if wrng.random_bool(0.5) {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect()
        });
        let wt = tape
            .constant(w.clone(), tape.shape(out).to_vec())
            .map_err(|e| e.to_string())?;
        let prod = tape.mul(out, wt).map_err(|e| e.to_string())?;
        let loss = tape.sum_all(prod).map_err(|e| e.to_string())?;
        let lv = tape.value(loss)[0];
        if !lv.is_finite() {
            return Err(format!("non-finite forward value {lv}"));
        }
        tape.backward(loss).map_err(|e| e.to_string())?;
        let grads = ids
            .iter()
            .zip(datas)
            .map(|(&id, d)| {
                tape.grad(id)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; d.len()])
            })
            .collect();
        Ok((lv, Some(grads)))
    };

    let (_, analytic) = match eval(&inputs) {
        Ok(v) => v,
        Err(e) => {
            return GradReport {
                name: case.name.to_string(),
                max_rel_err: f64::INFINITY,
                tol: case.tol,
                passed: false,
                note: Some(e),
            }
        }
    };
    let mut analytic = analytic.unwrap();
    if corrupt {
        analytic[0][0] = analytic[0][0] * 1.5 + 0.1;
    }

    let mut max_err = 0.0_f64;
    for (ii, data) in inputs.iter().enumerate() {
        for ei in 0..data.len() {
            let h = 1e-5 * data[ei].abs().max(1.0);
            let mut plus = inputs.clone();
            plus[ii][ei] += h;
            let mut minus = inputs.clone();
            minus[ii][ei] -= h;
            let (fp, _) = match eval(&plus) {
                Ok(v) => v,
                Err(e) => {
                    return GradReport {
                        name: case.name.to_string(),
                        max_rel_err: f64::INFINITY,
                        tol: case.tol,
                        passed: false,
                        note: Some(e),
                    }
                }
            };
            let (fm, _) = eval(&minus).expect("perturbed eval");
            let fd = (fp - fm) / (2.0 * h);
            max_err = max_err.max(rel_err(analytic[ii][ei], fd));
        }
    }

    GradReport {
        name: case.name.to_string(),
        max_rel_err: max_err,
        tol: case.tol,
        passed: max_err <= case.tol,
        note: None,
    }
}

fn op_cases() -> Vec<Case> {
    use Domain::*;
    let mut cases: Vec<Case> = Vec::new();
    let mut case = |name: &'static str, tol: f64, inputs: Vec<(Vec<usize>, Domain)>, build: BuildFn| {
        cases.push(Case {
            name,
            tol,
            inputs,
            build,
        });
    };

    case(
        "matmul",
        LINEAR_TOL,
        vec![(vec![3, 4], Symmetric), (vec![4, 2], Symmetric)],
        Box::new(|t, ids| t.matmul(ids[0], ids[1])),
    );
    case(
        "bmm",
        LINEAR_TOL,
        vec![(vec![2, 3, 2], Symmetric), (vec![2, 2, 3], Symmetric)],
        Box::new(|t, ids| t.bmm(ids[0], ids[1])),
    );
    case(
        "bmm_nt",
        LINEAR_TOL,
        vec![(vec![2, 3, 2], Symmetric), (vec![2, 4, 2], Symmetric)],
        Box::new(|t, ids| t.bmm_nt(ids[0], ids[1])),
    );
    case(
        "add",
        LINEAR_TOL,
        vec![(vec![3, 3], Symmetric), (vec![3, 3], Symmetric)],
        Box::new(|t, ids| t.add(ids[0], ids[1])),
    );
    case(
        "sub",
        LINEAR_TOL,
        vec![(vec![3, 3], Symmetric), (vec![3, 3], Symmetric)],
        Box::new(|t, ids| t.sub(ids[0], ids[1])),
    );
    case(
        "mul",
        LINEAR_TOL,
        vec![(vec![3, 3], Symmetric), (vec![3, 3], Symmetric)],
        Box::new(|t, ids| t.mul(ids[0], ids[1])),
    );
    case(
        "add_row_vec",
        LINEAR_TOL,
        vec![(vec![3, 4], Symmetric), (vec![4], Symmetric)],
        Box::new(|t, ids| t.add_row_vec(ids[0], ids[1])),
    );
    case(
        "mul_row_vec",
        LINEAR_TOL,
        vec![(vec![3, 4], Symmetric), (vec![4], Symmetric)],
        Box::new(|t, ids| t.mul_row_vec(ids[0], ids[1])),
    );
    case(
        "scale_rows",
        LINEAR_TOL,
        vec![(vec![3, 4], Symmetric), (vec![3], Symmetric)],
        Box::new(|t, ids| t.scale_rows(ids[0], ids[1])),
    );
    case(
        "scale",
        LINEAR_TOL,
        vec![(vec![3, 3], Symmetric)],
        Box::new(|t, ids| t.scale(ids[0], -1.7)),
    );
    case(
        "mul_scalar",
        LINEAR_TOL,
        vec![(vec![3, 3], Symmetric), (vec![1], Symmetric)],
        Box::new(|t, ids| t.mul_scalar(ids[0], ids[1])),
    );
    case(
        "sigmoid",
        DEFAULT_TOL,
        vec![(vec![3, 3], Symmetric)],
        Box::new(|t, ids| t.sigmoid(ids[0])),
    );
    case(
        "tanh",
        DEFAULT_TOL,
        vec![(vec![3, 3], Symmetric)],
        Box::new(|t, ids| t.tanh(ids[0])),
    );
    case(
        "relu",
        DEFAULT_TOL,
        vec![(vec![3, 3], AwayFromZero)],
        Box::new(|t, ids| t.relu(ids[0])),
    );
    case(
        "exp",
        DEFAULT_TOL,
        vec![(vec![3, 3], Symmetric)],
        Box::new(|t, ids| t.exp(ids[0])),
    );
    case(
        "ln",
        DEFAULT_TOL,
        vec![(vec![3, 3], Positive)],
        Box::new(|t, ids| t.ln(ids[0])),
    );
    case(
        "pow_const",
        DEFAULT_TOL,
        vec![(vec![3, 3], Positive)],
        Box::new(|t, ids| t.pow_const(ids[0], 2.0)),
    );
    case(
        "clamp",
        DEFAULT_TOL,
        vec![(vec![3, 3], Probability)],
        Box::new(|t, ids| t.clamp(ids[0], 1e-12, 1.0 - 1e-12)),
    );
    case(
        "softmax_rows",
        DEFAULT_TOL,
        vec![(vec![3, 5], Symmetric)],
        Box::new(|t, ids| t.softmax_rows(ids[0])),
    );
    case(
        "layer_norm_rows",
        DEFAULT_TOL,
        vec![
            (vec![3, 6], Symmetric),
            (vec![6], AwayFromZero),
            (vec![6], Symmetric),
        ],
        Box::new(|t, ids| t.layer_norm_rows(ids[0], ids[1], ids[2], 1e-5)),
    );
    case(
        "cosine_sim_rows",
        DEFAULT_TOL,
        vec![(vec![4, 5], AwayFromZero), (vec![5], AwayFromZero)],
        Box::new(|t, ids| t.cosine_sim_rows(ids[0], ids[1])),
    );
    case(
        "row_gather",
        LINEAR_TOL,
        vec![(vec![4, 3], Symmetric)],
        Box::new(|t, ids| t.row_gather(ids[0], &[2, 0, 2, 3, 1, 2])),
    );
    case(
        "concat_rows",
        LINEAR_TOL,
        vec![(vec![2, 3], Symmetric), (vec![4, 3], Symmetric)],
        Box::new(|t, ids| t.concat_rows(&[ids[0], ids[1]])),
    );
    case(
        "concat_cols",
        LINEAR_TOL,
        vec![(vec![3, 2], Symmetric), (vec![3, 4], Symmetric)],
        Box::new(|t, ids| t.concat_cols(&[ids[0], ids[1]])),
    );
    case(
        "slice_cols",
        LINEAR_TOL,
        vec![(vec![3, 5], Symmetric)],
        Box::new(|t, ids| t.slice_cols(ids[0], 1, 4)),
    );
    case(
        "reshape",
        LINEAR_TOL,
        vec![(vec![3, 4], Symmetric)],
        Box::new(|t, ids| t.reshape(ids[0], vec![2, 2, 3])),
    );
    case(
        "max_over_groups",
        LINEAR_TOL,
        vec![(vec![6, 3], Symmetric)],
        Box::new(|t, ids| t.max_over_groups(ids[0], 3, &[true, true, false, true, true, true])),
    );
    case(
        "sum_all",
        LINEAR_TOL,
        vec![(vec![3, 4], Symmetric)],
        Box::new(|t, ids| {
            let s = t.sum_all(ids[0])?;
            t.reshape(s, vec![1, 1])
        }),
    );
    case(
        "mean_all",
        LINEAR_TOL,
        vec![(vec![3, 4], Symmetric)],
        Box::new(|t, ids| {
            let s = t.mean_all(ids[0])?;
            t.reshape(s, vec![1, 1])
        }),
    );
    cases
}

/// Composite blocks mirroring how the model wires ops together.
fn composite_cases() -> Vec<Case> {
    use Domain::*;
    let mut cases: Vec<Case> = Vec::new();

    // similarity -> temperature -> sigmoid -> row scaling (the feature gate)
    cases.push(Case {
        name: "gate_block",
        tol: DEFAULT_TOL,
        inputs: vec![
            (vec![4, 6], AwayFromZero),
            (vec![6], AwayFromZero),
            (vec![1], Symmetric),
        ],
        build: Box::new(|t, ids| {
            let sims = t.cosine_sim_rows(ids[0], ids[1])?;
            let beta = t.exp(ids[2])?;
            let scaled = t.mul_scalar(sims, beta)?;
            let g = t.sigmoid(scaled)?;
            t.scale_rows(ids[0], g)
        }),
    });

    // lookup -> concat -> projection -> bias
    cases.push(Case {
        name: "projection_block",
        tol: LINEAR_TOL,
        inputs: vec![
            (vec![5, 3], Symmetric),
            (vec![5, 2], Symmetric),
            (vec![5, 4], Symmetric),
            (vec![4], Symmetric),
        ],
        build: Box::new(|t, ids| {
            let a = t.row_gather(ids[0], &[0, 2, 4, 1])?;
            let b = t.row_gather(ids[1], &[0, 2, 4, 1])?;
            let cat = t.concat_cols(&[a, b])?;
            let p = t.matmul(cat, ids[2])?;
            t.add_row_vec(p, ids[3])
        }),
    });

    // one recurrent cell update: gates from x·Wx + h·Wh + b, then state mix
    cases.push(Case {
        name: "lstm_step",
        tol: DEFAULT_TOL,
        inputs: vec![
            (vec![2, 3], Symmetric),  // x_t
            (vec![2, 2], Symmetric),  // h_prev
            (vec![2, 2], Symmetric),  // c_prev
            (vec![3, 8], Symmetric),  // w_x
            (vec![2, 8], Symmetric),  // w_h
            (vec![8], Symmetric),     // bias
        ],
        build: Box::new(|t, ids| {
            let xp = t.matmul(ids[0], ids[3])?;
            let hp = t.matmul(ids[1], ids[4])?;
            let pre0 = t.add(xp, hp)?;
            let pre = t.add_row_vec(pre0, ids[5])?;
            let i_pre = t.slice_cols(pre, 0, 2)?;
            let f_pre = t.slice_cols(pre, 2, 4)?;
            let g_pre = t.slice_cols(pre, 4, 6)?;
            let o_pre = t.slice_cols(pre, 6, 8)?;
            let i = t.sigmoid(i_pre)?;
            let f = t.sigmoid(f_pre)?;
            let g = t.tanh(g_pre)?;
            let o = t.sigmoid(o_pre)?;
            let fc = t.mul(f, ids[2])?;
            let ig = t.mul(i, g)?;
            let c = t.add(fc, ig)?;
            let ct = t.tanh(c)?;
            let h = t.mul(o, ct)?;
            t.concat_cols(&[h, c])
        }),
    });

    // single-head scaled dot-product attention with a PAD column mask
    cases.push(Case {
        name: "attention_block",
        tol: DEFAULT_TOL,
        inputs: vec![
            (vec![4, 4], Symmetric),  // sequence [T=4, d=4]
            (vec![4, 2], Symmetric),  // Wq
            (vec![4, 2], Symmetric),  // Wk
            (vec![4, 2], Symmetric),  // Wv
        ],
        build: Box::new(|t, ids| {
            let q = t.matmul(ids[0], ids[1])?;
            let k = t.matmul(ids[0], ids[2])?;
            let v = t.matmul(ids[0], ids[3])?;
            let q3 = t.reshape(q, vec![1, 4, 2])?;
            let k3 = t.reshape(k, vec![1, 4, 2])?;
            let scores = t.bmm_nt(q3, k3)?;
            let flat = t.reshape(scores, vec![4, 4])?;
            let scaled = t.scale(flat, 1.0 / (2.0_f64).sqrt())?;
            // last key position masked off
            let mask = t.constant(
                (0..16)
                    .map(|i| if i % 4 == 3 { -1e30 } else { 0.0 })
                    .collect(),
                vec![4, 4],
            )?;
            let masked = t.add(scaled, mask)?;
            let probs = t.softmax_rows(masked)?;
            let p3 = t.reshape(probs, vec![1, 4, 4])?;
            let v3 = t.reshape(v, vec![1, 4, 2])?;
            let ctx = t.bmm(p3, v3)?;
            t.reshape(ctx, vec![4, 2])
        }),
    });

    // residual add + layer norm
    cases.push(Case {
        name: "residual_norm_block",
        tol: DEFAULT_TOL,
        inputs: vec![
            (vec![3, 5], Symmetric),
            (vec![3, 5], Symmetric),
            (vec![5], AwayFromZero),
            (vec![5], Symmetric),
        ],
        build: Box::new(|t, ids| {
            let s = t.add(ids[0], ids[1])?;
            t.layer_norm_rows(s, ids[2], ids[3], 1e-5)
        }),
    });

    // focal-style loss surface over probabilities (labels fixed in-closure)
    cases.push(Case {
        name: "focal_block",
        tol: DEFAULT_TOL,
        inputs: vec![(vec![4, 3], Probability)],
        build: Box::new(|t, ids| {
            let y = t.constant(
                vec![1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0],
                vec![4, 3],
            )?;
            let ones = t.constant(vec![1.0; 12], vec![4, 3])?;
            let alpha = t.constant(vec![0.5, 0.3, 0.2], vec![3])?;
            let one_minus_alpha = t.constant(vec![0.5, 0.7, 0.8], vec![3])?;
            let p = t.clamp(ids[0], 1e-12, 1.0 - 1e-12)?;
            let one_minus_p = t.sub(ones, p)?;
            let one_minus_y = t.sub(ones, y)?;
            let pos_pow = t.pow_const(one_minus_p, 2.0)?;
            let pos_log = t.ln(p)?;
            let pos = t.mul(pos_pow, pos_log)?;
            let pos = t.mul_row_vec(pos, alpha)?;
            let pos = t.mul(pos, y)?;
            let neg_pow = t.pow_const(p, 2.0)?;
            let neg_log = t.ln(one_minus_p)?;
            let neg = t.mul(neg_pow, neg_log)?;
            let neg = t.mul_row_vec(neg, one_minus_alpha)?;
            let neg = t.mul(neg, one_minus_y)?;
            let both = t.add(pos, neg)?;
            let s = t.sum_all(both)?;
            let l = t.scale(s, -0.25)?;
            t.reshape(l, vec![1, 1])
        }),
    });

    cases
}

/// Run the registered per-op and composite checks. Each op appears exactly
/// once. `corrupt` names a case whose analytic gradient gets deliberately
/// damaged before comparison — the harness must then report it as failed.
pub fn run_suite(seed: u64, corrupt: Option<&str>) -> Vec<GradReport> {
    let mut reports = Vec::new();
    let all: Vec<Case> = op_cases().into_iter().chain(composite_cases()).collect();
    for (i, case) in all.iter().enumerate() {
        let bad = corrupt == Some(case.name);
        reports.push(run_case(case, seed, i as u64, bad));
    }
    reports
}

/// End-to-end model check: a complete two-sample forward pass (T = 8,
/// 50-word vocabulary, synthetic rows included) finite-differenced through
/// every trainable parameter. `corrupt` damages one analytic gradient so the
/// negative-control path can prove the comparison bites.
pub fn full_model_check(seed: u64, corrupt: bool) -> Result<GradReport, crate::model::ModelError> {
    use crate::data::TokenizedSample;
    use crate::model::{Batch, Mode, Model, ModelConfig, SyntheticBatch, Variant};

    let config = ModelConfig {
        word_vocab: 50,
        char_vocab: 14,
        dim_a: 4,
        dim_b: 4,
        dim_c: 6,
        proj_dim: 6,
        word_hidden: 3,
        char_embed_dim: 4,
        char_hidden: 3,
        heads: 2,
        head_hidden: 5,
        t_max: 8,
        t_char: 10,
        dropout_out: 0.0,
        dropout_rec: 0.0,
        ln_eps: 1e-5,
        unfreeze_word_tables: false,
    };
    let mut model = Model::init(config, Variant::Full, seed)?;

    let sample = |words: &[u32], chars: &[u32], labels: [u8; 6]| {
        let (word_len, char_len) = (words.len(), chars.len());
        let mut w = words.to_vec();
        let mut c = chars.to_vec();
        w.resize(8, 0);
        c.resize(10, 0);
        TokenizedSample {
            word_ids: w,
            char_ids: c,
            word_len,
            char_len,
            labels,
        }
    };
    let samples = vec![
        sample(
            &[3, 17, 42, 8, 25, 49, 11, 30],
            &[3, 5, 7, 9, 11, 13, 4, 6, 8, 10],
            [1, 0, 0, 0, 1, 0],
        ),
        sample(&[5, 9, 14], &[4, 8, 12], [0, 0, 1, 0, 0, 0]),
    ];
    let refs: Vec<&TokenizedSample> = samples.iter().collect();
    let batch = Batch::from_samples(&refs, 8, 10);
    let synth = SyntheticBatch {
        s: 2,
        reps: (0..12).map(|i| 0.04 * i as f64 - 0.25).collect(),
        labels: {
            let mut l = vec![0.0; 12];
            l[3] = 1.0;
            l[7] = 1.0;
            l
        },
    };

    let trainable: Vec<usize> = model
        .params
        .params
        .iter()
        .enumerate()
        .filter(|(_, p)| p.trainable)
        .map(|(i, _)| i)
        .collect();
    let init: Vec<Vec<f64>> = trainable
        .iter()
        .map(|&i| model.params.params[i].data.clone())
        .collect();
    let weights: Vec<f64> = (0..24)
        .map(|i| if i % 2 == 0 { 0.7 } else { -0.4 } + 0.01 * i as f64)
        .collect();

    let mut first = true;
    let max_rel_err = check_params(&init, |vals, want_grads| {
        for (k, &i) in trainable.iter().enumerate() {
            model.params.params[i].data = vals[k].to_vec();
        }
        let mut tape = Tape::new();
        let fwd = model
            .forward(&mut tape, &batch, Some(&synth), Mode::Eval)
            .expect("forward");
        let w = tape.constant(weights.clone(), vec![fwd.rows, 6]).expect("weights");
        let prod = tape.mul(fwd.probs, w).expect("mul");
        let loss = tape.sum_all(prod).expect("sum");
        let value = tape.value(loss)[0];
        if !want_grads {
            return (value, None);
        }
        tape.backward(loss).expect("backward");
        let grads = model.read_gradients(&tape, &fwd);
        let mut out: Vec<Vec<f64>> = trainable
            .iter()
            .map(|&i| grads[i].clone().expect("trainable param missing gradient"))
            .collect();
        if corrupt && first {
            out[0][0] = out[0][0] * 1.5 + 0.1;
            first = false;
        }
        (value, Some(out))
    });

    Ok(GradReport {
        name: "full_model".to_string(),
        max_rel_err,
        tol: DEFAULT_TOL,
        passed: max_rel_err <= DEFAULT_TOL,
        note: None,
    })
}

/// Finite-difference check over an arbitrary parameterized scalar function,
/// used for whole-model verification where inputs live outside the tape.
///
/// `f` maps parameter vectors to (loss, analytic gradients). Returns the max
/// relative error across every parameter element.
pub fn check_params(
    params: &[Vec<f64>],
    mut f: impl FnMut(&[Vec<f64>], bool) -> (f64, Option<Vec<Vec<f64>>>),
) -> f64 {
    let (_, grads) = f(params, true);
    let grads = grads.expect("analytic gradients requested");
    let mut max_err = 0.0_f64;
    for pi in 0..params.len() {
        for ei in 0..params[pi].len() {
            let h = 1e-5 * params[pi][ei].abs().max(1.0);
            let mut plus = params.to_vec();
            plus[pi][ei] += h;
            let mut minus = params.to_vec();
            minus[pi][ei] -= h;
            let (fp, _) = f(&plus, false);
            let (fm, _) = f(&minus, false);
            let fd = (fp - fm) / (2.0 * h);
            max_err = max_err.max(rel_err(grads[pi][ei], fd));
        }
    }
    max_err
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes_finite_difference() {
        let reports = run_suite(1234, None);
        for r in &reports {
            assert!(
                r.passed,
                "{} failed: max rel err {:.3e} > {:.0e} {:?}",
                r.name, r.max_rel_err, r.tol, r.note
            );
        }
    }

    #[test]
    fn op_names_are_unique() {
        let reports = run_suite(1, None);
        let mut names: Vec<_> = reports.iter().map(|r| r.name.clone()).collect();
        let before = names.len();
        names.sort();
        names.dedup();
        assert_eq!(before, names.len());
    }

    #[test]
    fn corrupted_adjoint_is_caught() {
        let reports = run_suite(1234, Some("sigmoid"));
        let bad = reports.iter().find(|r| r.name == "sigmoid").unwrap();
        assert!(!bad.passed, "corruption must be detected");
        assert!(reports
            .iter()
            .filter(|r| r.name != "sigmoid")
            .all(|r| r.passed));
    }

    #[test]
    fn full_model_check_passes_and_corruption_fails_it() {
        let ok = full_model_check(23, false).unwrap();
        assert!(ok.passed, "max rel err {:.3e}", ok.max_rel_err);
        let bad = full_model_check(23, true).unwrap();
        assert!(!bad.passed);
    }

    #[test]
    fn non_finite_forward_is_flagged() {
        let case = Case {
            name: "nan_probe",
            tol: DEFAULT_TOL,
            inputs: vec![(vec![2, 2], Domain::Positive)],
            build: Box::new(|t, ids| {
                let neg = t.scale(ids[0], -1.0)?;
                t.ln(neg) // ln of negative values -> NaN must be flagged
            }),
        };
        let rep = run_case(&case, 7, 0, false);
        assert!(!rep.passed);
        assert!(rep.note.unwrap().contains("non-finite"));
    }
}
