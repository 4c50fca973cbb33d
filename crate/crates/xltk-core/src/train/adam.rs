//! Adam with optional bias correction, global-norm clipping, and a refusal
//! path for non-finite gradients.

use crate::model::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Applied,
    /// Gradients contained NaN or infinity; nothing was touched.
    SkippedNonFinite,
}

/// First/second-moment state, parallel to the parameter registry.
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub bias_correction: bool,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamSet, bias_correction: bool) -> Adam {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            bias_correction,
            t: 0,
            m: params.params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    /// Number of applied steps so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update over every trainable parameter with a gradient. A single
    /// non-finite gradient value anywhere refuses the whole step: moments,
    /// step count, and parameters all stay untouched.
    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &[Option<Vec<f64>>],
        lr: f64,
    ) -> StepOutcome {
        assert_eq!(grads.len(), params.params.len());
        if !grads_all_finite(grads) {
            return StepOutcome::SkippedNonFinite;
        }
        self.t += 1;
        let (c1, c2) = if self.bias_correction {
            (
                1.0 - self.beta1.powi(self.t as i32),
                1.0 - self.beta2.powi(self.t as i32),
            )
        } else {
            (1.0, 1.0)
        };
        for (i, p) in params.params.iter_mut().enumerate() {
            let Some(g) = &grads[i] else { continue };
            if !p.trainable {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.data.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p.data[j] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        StepOutcome::Applied
    }
}

pub fn grads_all_finite(grads: &[Option<Vec<f64>>]) -> bool {
    grads
        .iter()
        .flatten()
        .all(|g| g.iter().all(|x| x.is_finite()))
}

/// Joint L2 norm over every present gradient.
pub fn global_norm(grads: &[Option<Vec<f64>>]) -> f64 {
    grads
        .iter()
        .flatten()
        .map(|g| g.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Scale all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Option<Vec<f64>>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            for x in g.iter_mut() {
                *x *= s;
            }
        }
    }
    norm
}

/// Learning-rate schedule evaluated at a (possibly fractional) epoch index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Fixed { lr: f64 },
    /// Cosine annealing with warm restarts every `period` epochs.
    Cosine { min: f64, max: f64, period: f64 },
}

impl Schedule {
    pub fn lr_at(&self, t: f64) -> f64 {
        match *self {
            Schedule::Fixed { lr } => lr,
            Schedule::Cosine { min, max, period } => {
                let phase = t - (t / period).floor() * period;
                min + 0.5 * (max - min) * (1.0 + (std::f64::consts::PI * phase / period).cos())
            }
        }
    }
}
