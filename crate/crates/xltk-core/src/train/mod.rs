//! Training loop: per-epoch reshuffle, minority oversampling in
//! representation space, focal (or plain BCE) loss, clipped Adam steps,
//! cosine-annealed learning rate, and early stopping with best-state restore.

mod adam;

pub use adam::{clip_global_norm, global_norm, grads_all_finite, Adam, Schedule, StepOutcome};

use crate::data::{TokenizedSample, NUM_LABELS};
use crate::imbalance::{
    bce_loss, class_weights, focal_loss, minority_pool, smote_rows, synthetic_count,
};
use crate::metrics::{evaluate, threshold_probs, LabelVec, MetricsReport};
use crate::model::{Batch, Mode, Model, ModelError, ParamSet, RepSpace, SyntheticBatch};
use crate::rng::{derived_rng, Stream};
use crate::tensor::{Tape, TensorError};
use rand::seq::SliceRandom;
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("gradients were non-finite for 3 consecutive batches (epoch {epoch}, batch {batch})")]
    Diverged { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: Schedule,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    pub bias_correction: bool,
    /// Focal exponent; ignored under the plain-BCE variant.
    pub gamma: f64,
    /// Ceiling on synthetic minority rows per epoch.
    pub smote_cap: usize,
    /// Minority:majority target as a fraction of the majority count.
    pub smote_ratio: f64,
    /// Neighbour count for interpolation (clamped to pool size − 1).
    pub smote_k: usize,
    pub patience: usize,
    /// An epoch must beat the best score by more than this to count.
    pub min_improvement: f64,
    pub threshold: f64,
    pub seed: u64,
    /// When off, epoch timings are logged as 0.000 so logs are
    /// byte-for-byte reproducible.
    pub log_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            schedule: Schedule::Cosine {
                min: 1e-6,
                max: 1e-4,
                period: 15.0,
            },
            clip_norm: 1.0,
            bias_correction: true,
            gamma: 2.0,
            smote_cap: 20_000,
            smote_ratio: 0.5,
            smote_k: 5,
            patience: 7,
            min_improvement: 1e-5,
            threshold: 0.5,
            seed: 17,
            log_timing: false,
        }
    }
}

/// Test seams. `val_override` replaces validation scoring, `on_epoch` sees the
/// parameters after each epoch, `grad_tamper` may rewrite gradients before
/// the optimizer does, `on_step` observes the (pre-clip, post-clip) global
/// gradient norm of every applied step.
#[derive(Default)]
pub struct TrainHooks<'a> {
    pub val_override: Option<&'a dyn Fn(usize) -> f64>,
    pub on_epoch: Option<&'a mut dyn FnMut(usize, &ParamSet)>,
    #[allow(clippy::type_complexity)]
    pub grad_tamper: Option<&'a dyn Fn(usize, usize, &mut [Option<Vec<f64>>])>,
    pub on_step: Option<&'a mut dyn FnMut(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_macro_f1: f64,
    pub lr: f64,
    pub seconds: f64,
    pub synthetic: usize,
    pub skipped_batches: usize,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    pub stopped_early: bool,
    pub smote_warned: bool,
    /// Per-category focal weights used (uniform under plain BCE).
    pub alpha: Vec<f64>,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopDecision {
    Improved,
    Wait,
    Stop,
}

/// Patience counter over validation scores; improvements must be strict.
pub struct EarlyStopper {
    pub best: f64,
    pub best_epoch: usize,
    patience: usize,
    min_improvement: f64,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize, min_improvement: f64) -> EarlyStopper {
        EarlyStopper {
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            patience,
            min_improvement,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        if score > self.best + self.min_improvement {
            self.best = score;
            self.best_epoch = epoch;
            self.stale = 0;
            return StopDecision::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Wait
        }
    }
}

/// Run Eval-mode forward passes in batches and threshold the outputs.
/// Returns (predictions, gold).
pub fn predict(
    model: &Model,
    samples: &[TokenizedSample],
    batch_size: usize,
    threshold: f64,
) -> Result<(Vec<LabelVec>, Vec<LabelVec>), TrainError> {
    let mut pred = Vec::with_capacity(samples.len());
    let mut gold = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&TokenizedSample> = chunk.iter().collect();
        let batch = Batch::from_samples(&refs, model.config.t_max, model.config.t_char);
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, &batch, None, Mode::Eval)?;
        pred.extend(threshold_probs(tape.value(fwd.probs), fwd.rows, threshold));
        gold.extend(chunk.iter().map(|s| s.labels));
    }
    Ok((pred, gold))
}

/// Convenience wrapper: predictions scored against gold labels.
pub fn evaluate_model(
    model: &Model,
    samples: &[TokenizedSample],
    batch_size: usize,
    threshold: f64,
) -> Result<MetricsReport, TrainError> {
    let (pred, gold) = predict(model, samples, batch_size, threshold)?;
    Ok(evaluate(&pred, &gold))
}

fn label_counts(samples: &[TokenizedSample]) -> Vec<usize> {
    let mut counts = vec![0usize; NUM_LABELS];
    for s in samples {
        for (k, &y) in s.labels.iter().enumerate() {
            counts[k] += y as usize;
        }
    }
    counts
}

/// Re-zero padding rows of any trainable embedding table and keep the gate
/// reference away from the zero vector. Run after every optimizer step.
fn post_step_maintenance(model: &mut Model) {
    for name in [
        "embed.table_a",
        "embed.table_b",
        "embed.table_c",
        "embed.char_table",
    ] {
        let Some(idx) = model.params.index_of(name) else { continue };
        let p = &mut model.params.params[idx];
        if !p.trainable {
            continue;
        }
        let dim = p.shape[1];
        for x in &mut p.data[..dim] {
            *x = 0.0;
        }
    }
    if let Some(idx) = model.params.index_of("gate.v") {
        crate::gate::enforce_norm_floor(&mut model.params.params[idx].data);
    }
}

pub fn train(
    model: &mut Model,
    train_set: &[TokenizedSample],
    val_set: &[TokenizedSample],
    cfg: &TrainConfig,
    mut hooks: TrainHooks,
) -> Result<TrainReport, TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let n = train_set.len();
    let labels: Vec<[u8; NUM_LABELS]> = train_set.iter().map(|s| s.labels).collect();
    let weights = class_weights(&label_counts(train_set));
    let alpha = if model.variant.uses_focal() {
        weights.alpha.clone()
    } else {
        vec![1.0 / NUM_LABELS as f64; NUM_LABELS]
    };

    let mut opt = Adam::new(&model.params, cfg.bias_correction);
    let mut stopper = EarlyStopper::new(cfg.patience, cfg.min_improvement);
    let mut best_snapshot: Option<Vec<(usize, Vec<f64>)>> = None;
    let mut smote_warned = false;
    let mut consecutive_bad = 0usize;
    let mut log: Vec<EpochLog> = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let lr = cfg.schedule.lr_at(epoch as f64);

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut derived_rng(cfg.seed, Stream::Shuffle, epoch as u64));

        // Synthetic minority rows live in the space the word encoder reads,
        // regenerated each epoch from the current projection and gate.
        let mut synth_rows: Vec<f64> = Vec::new();
        let mut synth_labels: Vec<f64> = Vec::new();
        let mut synth_count = 0usize;
        if model.variant.uses_smote() {
            let pool = minority_pool(&labels);
            let want =
                synthetic_count(pool.len(), n - pool.len(), cfg.smote_cap, cfg.smote_ratio);
            if want > 0 {
                let members: Vec<&TokenizedSample> =
                    pool.iter().map(|&i| &train_set[i]).collect();
                let reps = model.comment_representations(&members, RepSpace::EncoderInput)?;
                let mut rng = derived_rng(cfg.seed, Stream::Smote, epoch as u64);
                let (rows, warning) = smote_rows(&reps, want, cfg.smote_k, &mut rng);
                smote_warned |= warning.is_some();
                synth_count = rows.len();
                for (base, row) in rows {
                    synth_rows.extend_from_slice(&row);
                    synth_labels
                        .extend(labels[pool[base]].iter().map(|&y| y as f64));
                }
            }
        }

        let n_batches = n.div_ceil(cfg.batch_size.max(1));
        let mut loss_sum = 0.0;
        let mut loss_rows = 0usize;
        let mut skipped = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let refs: Vec<&TokenizedSample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let batch = Batch::from_samples(&refs, model.config.t_max, model.config.t_char);
            // Spread synthetics evenly over the epoch's batches.
            let lo = bi * synth_count / n_batches;
            let hi = (bi + 1) * synth_count / n_batches;
            let synth = (hi > lo).then(|| SyntheticBatch {
                s: hi - lo,
                reps: synth_rows[lo * model.config.proj_dim..hi * model.config.proj_dim].to_vec(),
                labels: synth_labels[lo * NUM_LABELS..hi * NUM_LABELS].to_vec(),
            });

            let mut tape = Tape::new();
            let mut drop_rng =
                derived_rng(cfg.seed, Stream::Dropout, (epoch * n_batches + bi) as u64);
            let fwd = model.forward(
                &mut tape,
                &batch,
                synth.as_ref(),
                Mode::Train { rng: &mut drop_rng },
            )?;
            let loss = if model.variant.uses_focal() {
                focal_loss(&mut tape, fwd.probs, &fwd.labels, &alpha, cfg.gamma)?
            } else {
                bce_loss(&mut tape, fwd.probs, &fwd.labels)?
            };
            let loss_val = tape.value(loss)[0];

            let mut bad = !loss_val.is_finite();
            if !bad {
                tape.backward(loss)?;
                let mut grads = model.read_gradients(&tape, &fwd);
                if let Some(tamper) = hooks.grad_tamper {
                    tamper(epoch, bi, &mut grads);
                }
                if grads_all_finite(&grads) {
                    let pre = clip_global_norm(&mut grads, cfg.clip_norm);
                    if let Some(obs) = hooks.on_step.as_deref_mut() {
                        obs(pre, global_norm(&grads));
                    }
                    opt.step(&mut model.params, &grads, lr);
                    post_step_maintenance(model);
                    loss_sum += loss_val * fwd.rows as f64;
                    loss_rows += fwd.rows;
                } else {
                    bad = true;
                }
            }
            if bad {
                consecutive_bad += 1;
                skipped += 1;
                if consecutive_bad >= 3 {
                    return Err(TrainError::Diverged { epoch, batch: bi });
                }
            } else {
                consecutive_bad = 0;
            }
        }

        let val_macro_f1 = match hooks.val_override {
            Some(f) => f(epoch),
            None => evaluate_model(model, val_set, cfg.batch_size, cfg.threshold)?.macro_f1,
        };
        let decision = stopper.observe(epoch, val_macro_f1);
        if decision == StopDecision::Improved {
            best_snapshot = Some(
                model
                    .params
                    .params
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.trainable)
                    .map(|(i, p)| (i, p.data.clone()))
                    .collect(),
            );
        }

        log.push(EpochLog {
            epoch,
            loss: if loss_rows > 0 {
                loss_sum / loss_rows as f64
            } else {
                f64::NAN
            },
            val_macro_f1,
            lr,
            seconds: if cfg.log_timing {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
            synthetic: synth_count,
            skipped_batches: skipped,
        });
        if let Some(cb) = hooks.on_epoch.as_deref_mut() {
            cb(epoch, &model.params);
        }
        if decision == StopDecision::Stop {
            stopped_early = true;
            break;
        }
    }

    if let Some(snapshot) = best_snapshot {
        for (i, data) in snapshot {
            model.params.params[i].data = data;
        }
    }

    Ok(TrainReport {
        epochs_run: log.len(),
        best_epoch: stopper.best_epoch,
        best_val_macro_f1: stopper.best,
        stopped_early,
        smote_warned,
        alpha,
        log,
    })
}
