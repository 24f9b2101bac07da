//! Adam with bias correction, stepwise learning-rate decay and global-norm
//! gradient clipping.

use std::collections::HashMap;

use crate::error::{DlnError, Result};
use crate::store::ParamStore;
use crate::tensor::Scalar;

#[derive(Debug, Clone)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Learning rate is multiplied by this factor every
    /// `decay_interval_epochs`.
    pub decay_factor: f64,
    pub decay_interval_epochs: usize,
    pub clip_norm: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay_factor: 0.5,
            decay_interval_epochs: 80,
            clip_norm: 5.0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(DlnError::Config("learning_rate must be positive".into()));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0 < v && v < 1.0) {
                return Err(DlnError::Config(format!("{name} must be in (0,1), got {v}")));
            }
        }
        if self.epsilon <= 0.0 {
            return Err(DlnError::Config("epsilon must be positive".into()));
        }
        if !(0.0 < self.decay_factor && self.decay_factor <= 1.0) {
            return Err(DlnError::Config("decay_factor must be in (0,1]".into()));
        }
        if self.decay_interval_epochs == 0 {
            return Err(DlnError::Config("decay_interval_epochs must be positive".into()));
        }
        if self.clip_norm <= 0.0 {
            return Err(DlnError::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_lr(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay_factor.powi((epoch / self.decay_interval_epochs) as i32)
    }
}

/// First/second moment buffers per parameter plus the shared step counter.
#[derive(Debug, Clone, Default)]
pub struct AdamState<T: Scalar> {
    moments: HashMap<String, (Vec<T>, Vec<T>)>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new() -> Self {
        AdamState {
            moments: HashMap::new(),
            t: 0,
        }
    }

    pub fn moments(&self, name: &str) -> Option<(&[T], &[T])> {
        self.moments.get(name).map(|(m, v)| (m.as_slice(), v.as_slice()))
    }
}

/// Rescales all trainable gradients to global L2 norm `clip_norm` when they
/// exceed it. Returns the applied scale (1.0 when untouched).
pub fn clip_gradients<T: Scalar>(store: &mut ParamStore<T>, clip_norm: f64) -> Result<T> {
    if clip_norm <= 0.0 {
        return Err(DlnError::Argument(format!(
            "clip_norm must be positive, got {clip_norm}"
        )));
    }
    let mut sq = T::zero();
    for (name, p) in store.iter() {
        if !p.trainable {
            continue;
        }
        let grad = p.tensor.grad().ok_or_else(|| {
            DlnError::State(format!("trainable parameter `{name}` has no gradient"))
        })?;
        for g in grad {
            sq = sq + *g * *g;
        }
    }
    let norm = sq.sqrt();
    let clip = T::from_f64(clip_norm);
    if norm <= clip {
        return Ok(T::one());
    }
    let scale = clip / norm;
    for (_, p) in store.iter_mut() {
        if !p.trainable {
            continue;
        }
        for g in p.tensor.grad_mut() {
            *g = *g * scale;
        }
    }
    Ok(scale)
}

/// One bias-corrected Adam update over the trainable entries, with the epoch
/// driving stepwise learning-rate decay. Gradients (trainable and frozen)
/// are zeroed afterwards.
pub fn adam_step<T: Scalar>(
    store: &mut ParamStore<T>,
    state: &mut AdamState<T>,
    cfg: &OptimConfig,
    epoch: usize,
) -> Result<()> {
    cfg.validate()?;
    state.t += 1;
    let t = state.t as i32;
    let lr = T::from_f64(cfg.effective_lr(epoch));
    let beta1 = T::from_f64(cfg.beta1);
    let beta2 = T::from_f64(cfg.beta2);
    let eps = T::from_f64(cfg.epsilon);
    let one = T::one();
    let bc1 = one - beta1.powi(t);
    let bc2 = one - beta2.powi(t);

    for (name, p) in store.iter_mut() {
        if !p.trainable {
            continue;
        }
        let numel = p.tensor.numel();
        let (m, v) = state
            .moments
            .entry(name.to_string())
            .or_insert_with(|| (vec![T::zero(); numel], vec![T::zero(); numel]));
        if m.len() != numel {
            return Err(DlnError::Shape {
                op: "adam_step",
                lhs: vec![m.len()],
                rhs: vec![numel],
            });
        }
        let grad = p
            .tensor
            .grad()
            .ok_or_else(|| DlnError::State(format!("trainable parameter `{name}` has no gradient")))?
            .to_vec();
        let values = p.tensor.values_mut();
        for i in 0..numel {
            let g = grad[i];
            m[i] = beta1 * m[i] + (one - beta1) * g;
            v[i] = beta2 * v[i] + (one - beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            values[i] = values[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    store.zero_grads();
    Ok(())
}
