//! Batched forward pass. Sequences live on the tape as rank-2 blocks of
//! `batch × time` rows in batch-major order (row = b·T + t); the LSTMs walk
//! timesteps over the whole batch, carrying state through padded positions
//! unchanged so padding can never leak into real steps.

use super::{Model, ModelError, Variant};
use crate::data::{TokenizedSample, NUM_LABELS, PAD};
use crate::embed::{self, FusionIds};
use crate::gate::{self, GateIds};
use crate::tensor::{Tape, TensorError, TensorId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A padded minibatch in batch-major flat layout.
#[derive(Debug, Clone)]
pub struct Batch {
    pub b: usize,
    pub t: usize,
    pub t_char: usize,
    /// `b*t` word ids, row-major per sample.
    pub word_ids: Vec<usize>,
    /// 1.0 on real positions, 0.0 on padding.
    pub word_mask: Vec<f64>,
    pub char_ids: Vec<usize>,
    pub char_mask: Vec<f64>,
    /// `b × NUM_LABELS` targets as 0.0/1.0.
    pub labels: Vec<f64>,
    /// Samples whose character sequence is empty (their character feature is
    /// a zero vector).
    pub empty_char_rows: usize,
}

impl Batch {
    /// Pack samples, shrinking the time axes to the batch's longest real
    /// lengths (capped by the configured maxima).
    pub fn from_samples(samples: &[&TokenizedSample], t_cap: usize, tc_cap: usize) -> Batch {
        assert!(!samples.is_empty(), "empty batch");
        let b = samples.len();
        let t = samples
            .iter()
            .map(|s| s.word_len)
            .max()
            .unwrap_or(1)
            .clamp(1, t_cap.max(1));
        let t_char = samples
            .iter()
            .map(|s| s.char_len)
            .max()
            .unwrap_or(1)
            .clamp(1, tc_cap.max(1));

        let mut word_ids = vec![PAD as usize; b * t];
        let mut word_mask = vec![0.0; b * t];
        let mut char_ids = vec![PAD as usize; b * t_char];
        let mut char_mask = vec![0.0; b * t_char];
        let mut labels = vec![0.0; b * NUM_LABELS];
        let mut empty_char_rows = 0;
        for (i, s) in samples.iter().enumerate() {
            let wl = s.word_len.min(t);
            for k in 0..wl {
                word_ids[i * t + k] = s.word_ids[k] as usize;
                word_mask[i * t + k] = 1.0;
            }
            let cl = s.char_len.min(t_char);
            if cl == 0 {
                empty_char_rows += 1;
            }
            for k in 0..cl {
                char_ids[i * t_char + k] = s.char_ids[k] as usize;
                char_mask[i * t_char + k] = 1.0;
            }
            for (k, &y) in s.labels.iter().enumerate() {
                labels[i * NUM_LABELS + k] = y as f64;
            }
        }
        Batch {
            b,
            t,
            t_char,
            word_ids,
            word_mask,
            char_ids,
            char_mask,
            labels,
            empty_char_rows,
        }
    }
}

/// Interpolated minority representations injected at the encoder input as
/// length-1 sequences.
#[derive(Debug, Clone, Default)]
pub struct SyntheticBatch {
    pub s: usize,
    /// `s × proj_dim` encoder-input rows.
    pub reps: Vec<f64>,
    /// `s × NUM_LABELS` targets.
    pub labels: Vec<f64>,
}

/// Evaluation runs the deterministic network; training draws dropout masks
/// from the supplied generator.
pub enum Mode<'r> {
    Eval,
    Train { rng: &'r mut ChaCha8Rng },
}

/// Handles into the tape after a forward pass.
pub struct Forward {
    /// `rows × NUM_LABELS` sigmoid outputs.
    pub probs: TensorId,
    /// Real rows then synthetic rows.
    pub rows: usize,
    /// Flat `rows × NUM_LABELS` targets aligned with `probs`.
    pub labels: Vec<f64>,
    /// Per-position gate values (padding masked to zero); absent without
    /// gating.
    pub gates: Option<TensorId>,
    /// Raw per-position cosine similarities; absent without gating.
    pub sims: Option<TensorId>,
    /// Leaf ids parallel to `params.params`, for gradient readback.
    pub param_ids: Vec<TensorId>,
}

/// Which intermediate row space [`Model::comment_representations`] pools.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum RepSpace {
    /// Fused + projected embeddings, before any gating.
    Projected,
    /// Exactly what the word encoder consumes (gated, or mask-zeroed).
    EncoderInput,
}

struct LstmIds {
    w_x: TensorId,
    w_h: TensorId,
    b: TensorId,
}

impl Model {
    pub fn forward(
        &self,
        tape: &mut Tape,
        batch: &Batch,
        synth: Option<&SyntheticBatch>,
        mode: Mode,
    ) -> Result<Forward, ModelError> {
        let c = &self.config;
        let variant = self.variant;
        let p_dim = c.proj_dim;
        let d = c.encoder_dim();
        let t = batch.t;
        let s = synth.map_or(0, |sy| sy.s);
        let bb = batch.b + s;

        let mut param_ids = Vec::with_capacity(self.params.params.len());
        for p in &self.params.params {
            param_ids.push(tape.leaf(p.data.clone(), p.shape.clone(), p.trainable)?);
        }
        let id = |name: &str| -> TensorId {
            param_ids[self.params.index_of(name).unwrap_or_else(|| panic!("missing param {name}"))]
        };

        // All dropout masks are drawn up front in a fixed order so a given
        // generator state always produces the same network.
        let mut rng = match mode {
            Mode::Train { rng } => Some(rng),
            Mode::Eval => None,
        };
        let mask_tensor = |tape: &mut Tape,
                               rng: &mut Option<&mut ChaCha8Rng>,
                               rows: usize,
                               cols: usize,
                               p: f64|
         -> Result<Option<TensorId>, TensorError> {
            let Some(r) = rng.as_deref_mut() else {
                return Ok(None);
            };
            if p <= 0.0 {
                return Ok(None);
            }
            let keep = 1.0 - p;
            let data: Vec<f64> = (0..rows * cols)
                .map(|_| if r.random_bool(p) { 0.0 } else { 1.0 / keep })
                .collect();
            Ok(Some(tape.constant(data, vec![rows, cols])?))
        };
        let rec_l0_f = mask_tensor(tape, &mut rng, bb, c.word_hidden, c.dropout_rec)?;
        let rec_l0_b = mask_tensor(tape, &mut rng, bb, c.word_hidden, c.dropout_rec)?;
        let mut out_l0 = Vec::with_capacity(t);
        for _ in 0..t {
            out_l0.push(mask_tensor(tape, &mut rng, bb, d, c.dropout_out)?);
        }
        let rec_l1_f = mask_tensor(tape, &mut rng, bb, c.word_hidden, c.dropout_rec)?;
        let rec_l1_b = mask_tensor(tape, &mut rng, bb, c.word_hidden, c.dropout_rec)?;
        let mut out_l1 = Vec::with_capacity(t);
        for _ in 0..t {
            out_l1.push(mask_tensor(tape, &mut rng, bb, d, c.dropout_out)?);
        }
        let head_mask = mask_tensor(tape, &mut rng, bb, c.head_hidden, c.dropout_out)?;

        // Embed + project the real rows, then gate (or mask) them.
        let projected = if variant.multisource() {
            embed::fuse_project(
                tape,
                &batch.word_ids,
                FusionIds {
                    table_a: id("embed.table_a"),
                    table_b: id("embed.table_b"),
                    table_c: id("embed.table_c"),
                    w_proj: id("embed.w_proj"),
                    b_proj: id("embed.b_proj"),
                },
            )?
        } else {
            embed::single_source_project(
                tape,
                &batch.word_ids,
                id("embed.table_a"),
                id("embed.w_proj"),
                id("embed.b_proj"),
            )?
        };
        let (enc_real, gates, sims) = if variant.has_gating() {
            let g = gate::gate_rows(
                tape,
                projected,
                GateIds {
                    v: id("gate.v"),
                    beta_raw: id("gate.beta_raw"),
                },
                &batch.word_mask,
            )?;
            (g.gated, Some(g.gates), Some(g.sims))
        } else {
            let m = tape.constant(batch.word_mask.clone(), vec![batch.b * t])?;
            (tape.scale_rows(projected, m)?, None, None)
        };

        // Synthetic rows enter the encoder as length-1 sequences.
        let (enc_in, enc_mask) = if s > 0 {
            let sy = synth.expect("s > 0 implies synth");
            let mut block = vec![0.0; s * t * p_dim];
            for i in 0..s {
                block[i * t * p_dim..i * t * p_dim + p_dim]
                    .copy_from_slice(&sy.reps[i * p_dim..(i + 1) * p_dim]);
            }
            let sb = tape.constant(block, vec![s * t, p_dim])?;
            let cat = tape.concat_rows(&[enc_real, sb])?;
            let mut mask = batch.word_mask.clone();
            for _ in 0..s {
                mask.push(1.0);
                mask.extend(std::iter::repeat(0.0).take(t - 1));
            }
            (cat, mask)
        } else {
            (enc_real, batch.word_mask.clone())
        };

        // Per-step views and keep/carry masks.
        let step_rows = |step: usize| -> Vec<usize> { (0..bb).map(|bi| bi * t + step).collect() };
        let mut xs = Vec::with_capacity(t);
        let mut ms = Vec::with_capacity(t);
        for step in 0..t {
            xs.push(tape.row_gather(enc_in, &step_rows(step))?);
            ms.push(step_masks(tape, &enc_mask, bb, t, step)?);
        }

        let l0 = self.bilstm(
            tape,
            &xs,
            &ms,
            &lstm_ids(&id, "word_lstm.l0.fwd"),
            &lstm_ids(&id, "word_lstm.l0.bwd"),
            bb,
            c.word_hidden,
            rec_l0_f,
            rec_l0_b,
        )?;
        let l0 = apply_step_dropout(tape, l0, &out_l0)?;
        let l1 = self.bilstm(
            tape,
            &l0,
            &ms,
            &lstm_ids(&id, "word_lstm.l1.fwd"),
            &lstm_ids(&id, "word_lstm.l1.bwd"),
            bb,
            c.word_hidden,
            rec_l1_f,
            rec_l1_b,
        )?;
        let l1 = apply_step_dropout(tape, l1, &out_l1)?;

        // Restack the per-step outputs batch-major for attention and pooling.
        let stacked = tape.concat_rows(&l1)?; // time-major [t*bb × d]
        let mut perm = vec![0usize; bb * t];
        for (bi, p) in perm.chunks_mut(t).enumerate() {
            for (step, slot) in p.iter_mut().enumerate() {
                *slot = step * bb + bi;
            }
        }
        let h = tape.row_gather(stacked, &perm)?; // [bb*t × d]

        let z = if variant.has_attention() {
            let dk = d / c.heads;
            let mut attn_mask = vec![0.0; bb * t * t];
            for bi in 0..bb {
                for k in 0..t {
                    if enc_mask[bi * t + k] == 0.0 {
                        for q in 0..t {
                            attn_mask[bi * t * t + q * t + k] = -1e30;
                        }
                    }
                }
            }
            let amask = tape.constant(attn_mask, vec![bb, t, t])?;
            let mut heads = Vec::with_capacity(c.heads);
            for hi in 0..c.heads {
                let q = tape.matmul(h, id(&format!("attn.h{hi}.w_q")))?;
                let k = tape.matmul(h, id(&format!("attn.h{hi}.w_k")))?;
                let v = tape.matmul(h, id(&format!("attn.h{hi}.w_v")))?;
                let q3 = tape.reshape(q, vec![bb, t, dk])?;
                let k3 = tape.reshape(k, vec![bb, t, dk])?;
                let v3 = tape.reshape(v, vec![bb, t, dk])?;
                let scores = tape.bmm_nt(q3, k3)?;
                let scores = tape.scale(scores, 1.0 / (dk as f64).sqrt())?;
                let scores = tape.add(scores, amask)?;
                let flat = tape.reshape(scores, vec![bb * t, t])?;
                let weights = tape.softmax_rows(flat)?;
                let w3 = tape.reshape(weights, vec![bb, t, t])?;
                let ctx = tape.bmm(w3, v3)?;
                heads.push(tape.reshape(ctx, vec![bb * t, dk])?);
            }
            let cat = tape.concat_cols(&heads)?;
            let u = tape.matmul(cat, id("attn.w_o"))?;
            let pre_norm = if variant == Variant::NoResidual {
                u
            } else {
                tape.add(h, u)?
            };
            tape.layer_norm_rows(pre_norm, id("norm.gamma"), id("norm.beta"), c.ln_eps)?
        } else {
            h
        };

        let keep: Vec<bool> = enc_mask.iter().map(|&m| m == 1.0).collect();
        let pooled = tape.max_over_groups(z, t, &keep)?;

        let feats = if variant.has_char() {
            let char_real = self.char_branch(tape, batch, &id)?;
            let char_all = if s > 0 {
                let zeros = tape.constant(vec![0.0; s * 2 * c.char_hidden], vec![s, 2 * c.char_hidden])?;
                tape.concat_rows(&[char_real, zeros])?
            } else {
                char_real
            };
            tape.concat_cols(&[pooled, char_all])?
        } else {
            pooled
        };

        let h1 = tape.matmul(feats, id("head.w1"))?;
        let h1 = tape.add_row_vec(h1, id("head.b1"))?;
        let h1 = tape.relu(h1)?;
        let h1 = match head_mask {
            Some(m) => tape.mul(h1, m)?,
            None => h1,
        };
        let logits = tape.matmul(h1, id("head.w2"))?;
        let logits = tape.add_row_vec(logits, id("head.b2"))?;
        let probs = tape.sigmoid(logits)?;

        let mut labels = batch.labels.clone();
        if let Some(sy) = synth {
            labels.extend_from_slice(&sy.labels);
        }

        Ok(Forward {
            probs,
            rows: bb,
            labels,
            gates,
            sims,
            param_ids,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn bilstm(
        &self,
        tape: &mut Tape,
        xs: &[TensorId],
        ms: &[(TensorId, TensorId)],
        fwd: &LstmIds,
        bwd: &LstmIds,
        rows: usize,
        hidden: usize,
        rec_f: Option<TensorId>,
        rec_b: Option<TensorId>,
    ) -> Result<Vec<TensorId>, TensorError> {
        let t = xs.len();
        let hf = lstm_run(tape, xs, ms, fwd, rows, hidden, rec_f)?;
        let xs_rev: Vec<TensorId> = xs.iter().rev().copied().collect();
        let ms_rev: Vec<(TensorId, TensorId)> = ms.iter().rev().copied().collect();
        let hb = lstm_run(tape, &xs_rev, &ms_rev, bwd, rows, hidden, rec_b)?;
        (0..t)
            .map(|step| tape.concat_cols(&[hf[step], hb[t - 1 - step]]))
            .collect()
    }

    /// Character BiLSTM over the real rows; the feature is the concatenation
    /// of both directions' final carried states.
    fn char_branch(
        &self,
        tape: &mut Tape,
        batch: &Batch,
        id: &impl Fn(&str) -> TensorId,
    ) -> Result<TensorId, TensorError> {
        let c = &self.config;
        let tc = batch.t_char;
        let b = batch.b;
        let table = id("embed.char_table");
        let embedded = tape.row_gather(table, &batch.char_ids)?; // [b*tc × emb]
        let mut xs = Vec::with_capacity(tc);
        let mut ms = Vec::with_capacity(tc);
        for step in 0..tc {
            let rows: Vec<usize> = (0..b).map(|bi| bi * tc + step).collect();
            xs.push(tape.row_gather(embedded, &rows)?);
            ms.push(step_masks(tape, &batch.char_mask, b, tc, step)?);
        }
        let fwd = lstm_ids(id, "char_lstm.fwd");
        let bwd = lstm_ids(id, "char_lstm.bwd");
        let hf = lstm_run(tape, &xs, &ms, &fwd, b, c.char_hidden, None)?;
        let xs_rev: Vec<TensorId> = xs.iter().rev().copied().collect();
        let ms_rev: Vec<(TensorId, TensorId)> = ms.iter().rev().copied().collect();
        let hb = lstm_run(tape, &xs_rev, &ms_rev, &bwd, b, c.char_hidden, None)?;
        tape.concat_cols(&[*hf.last().expect("t_char >= 1"), *hb.last().expect("t_char >= 1")])
    }

    /// Read back per-parameter gradients after `tape.backward`, in parameter
    /// order. Frozen parameters yield `None`.
    pub fn read_gradients(&self, tape: &Tape, fwd: &Forward) -> Vec<Option<Vec<f64>>> {
        fwd.param_ids
            .iter()
            .map(|&tid| tape.grad(tid).map(|g| g.to_vec()))
            .collect()
    }

    /// Mean-pooled per-comment rows from an intermediate space, computed on a
    /// throwaway tape without gradients.
    pub fn comment_representations(
        &self,
        samples: &[&TokenizedSample],
        space: RepSpace,
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        if samples.is_empty() {
            return Ok(Vec::new());
        }
        let c = &self.config;
        let batch = Batch::from_samples(samples, c.t_max, c.t_char);
        let mut tape = Tape::new();
        let mut need = vec!["embed.table_a", "embed.w_proj", "embed.b_proj"];
        if self.variant.multisource() {
            need.extend(["embed.table_b", "embed.table_c"]);
        }
        if self.variant.has_gating() && space == RepSpace::EncoderInput {
            need.extend(["gate.v", "gate.beta_raw"]);
        }
        let mut ids = std::collections::HashMap::new();
        for name in need {
            let p = self.params.get(name);
            ids.insert(name, tape.constant(p.data.clone(), p.shape.clone())?);
        }
        let projected = if self.variant.multisource() {
            embed::fuse_project(
                &mut tape,
                &batch.word_ids,
                FusionIds {
                    table_a: ids["embed.table_a"],
                    table_b: ids["embed.table_b"],
                    table_c: ids["embed.table_c"],
                    w_proj: ids["embed.w_proj"],
                    b_proj: ids["embed.b_proj"],
                },
            )?
        } else {
            embed::single_source_project(
                &mut tape,
                &batch.word_ids,
                ids["embed.table_a"],
                ids["embed.w_proj"],
                ids["embed.b_proj"],
            )?
        };
        let rows = match space {
            RepSpace::Projected => projected,
            RepSpace::EncoderInput => {
                if self.variant.has_gating() {
                    gate::gate_rows(
                        &mut tape,
                        projected,
                        GateIds {
                            v: ids["gate.v"],
                            beta_raw: ids["gate.beta_raw"],
                        },
                        &batch.word_mask,
                    )?
                    .gated
                } else {
                    let m = tape.constant(batch.word_mask.clone(), vec![batch.b * batch.t])?;
                    tape.scale_rows(projected, m)?
                }
            }
        };
        let vals = tape.value(rows);
        let p_dim = c.proj_dim;
        let mut out = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            let len = s.word_len.min(batch.t).max(1);
            let mut rep = vec![0.0; p_dim];
            for k in 0..len {
                let row = (i * batch.t + k) * p_dim;
                for j in 0..p_dim {
                    rep[j] += vals[row + j];
                }
            }
            for r in &mut rep {
                *r /= len as f64;
            }
            out.push(rep);
        }
        Ok(out)
    }
}

fn lstm_ids(id: &impl Fn(&str) -> TensorId, prefix: &str) -> LstmIds {
    LstmIds {
        w_x: id(&format!("{prefix}.w_x")),
        w_h: id(&format!("{prefix}.w_h")),
        b: id(&format!("{prefix}.b")),
    }
}

/// (mask, 1−mask) column constants for one timestep.
fn step_masks(
    tape: &mut Tape,
    flat_mask: &[f64],
    rows: usize,
    t: usize,
    step: usize,
) -> Result<(TensorId, TensorId), TensorError> {
    let m: Vec<f64> = (0..rows).map(|bi| flat_mask[bi * t + step]).collect();
    let im: Vec<f64> = m.iter().map(|&v| 1.0 - v).collect();
    Ok((
        tape.constant(m, vec![rows])?,
        tape.constant(im, vec![rows])?,
    ))
}

/// One LSTM direction over prepared step tensors. Rows whose mask is zero
/// carry the previous hidden and cell state through unchanged, so padded
/// steps neither read their input nor perturb the state.
fn lstm_run(
    tape: &mut Tape,
    xs: &[TensorId],
    ms: &[(TensorId, TensorId)],
    w: &LstmIds,
    rows: usize,
    hidden: usize,
    rec_mask: Option<TensorId>,
) -> Result<Vec<TensorId>, TensorError> {
    let mut h = tape.constant(vec![0.0; rows * hidden], vec![rows, hidden])?;
    let mut cell = tape.constant(vec![0.0; rows * hidden], vec![rows, hidden])?;
    let mut out = Vec::with_capacity(xs.len());
    for (x, &(m, im)) in xs.iter().zip(ms) {
        let h_in = match rec_mask {
            Some(rm) => tape.mul(h, rm)?,
            None => h,
        };
        let px = tape.matmul(*x, w.w_x)?;
        let ph = tape.matmul(h_in, w.w_h)?;
        let pre = tape.add(px, ph)?;
        let pre = tape.add_row_vec(pre, w.b)?;
        let i_g = {
            let sl = tape.slice_cols(pre, 0, hidden)?;
            tape.sigmoid(sl)?
        };
        let f_g = {
            let sl = tape.slice_cols(pre, hidden, 2 * hidden)?;
            tape.sigmoid(sl)?
        };
        let g_g = {
            let sl = tape.slice_cols(pre, 2 * hidden, 3 * hidden)?;
            tape.tanh(sl)?
        };
        let o_g = {
            let sl = tape.slice_cols(pre, 3 * hidden, 4 * hidden)?;
            tape.sigmoid(sl)?
        };
        let fc = tape.mul(f_g, cell)?;
        let ig = tape.mul(i_g, g_g)?;
        let c_new = tape.add(fc, ig)?;
        let c_act = tape.tanh(c_new)?;
        let h_new = tape.mul(o_g, c_act)?;
        let hn = tape.scale_rows(h_new, m)?;
        let hp = tape.scale_rows(h, im)?;
        h = tape.add(hn, hp)?;
        let cn = tape.scale_rows(c_new, m)?;
        let cp = tape.scale_rows(cell, im)?;
        cell = tape.add(cn, cp)?;
        out.push(h);
    }
    Ok(out)
}

fn apply_step_dropout(
    tape: &mut Tape,
    steps: Vec<TensorId>,
    masks: &[Option<TensorId>],
) -> Result<Vec<TensorId>, TensorError> {
    steps
        .into_iter()
        .zip(masks)
        .map(|(x, m)| match m {
            Some(m) => tape.mul(x, *m),
            None => Ok(x),
        })
        .collect()
}
