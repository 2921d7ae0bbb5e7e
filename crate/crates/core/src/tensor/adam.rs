use alloc::format;
use alloc::vec::Vec;

use super::{Gradients, ParamStore, Tensor, TensorError};
use crate::math;

/// Per-epoch multiplicative learning-rate decay.
pub const LR_DECAY: f64 = 0.85;

/// `initial_lr * 0.85^epoch`.
pub fn lr_exponential_decay(initial_lr: f64, epoch: i64) -> Result<f64, TensorError> {
    if epoch < 0 {
        return Err(TensorError::Contract(format!("negative epoch {}", epoch)));
    }
    Ok(initial_lr * math::powi(LR_DECAY, epoch as i32))
}

/// Adam moments and hyper-parameters. A default-constructed state has no
/// moments and is rejected by [`adam_step`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    moments: Vec<(Tensor, Tensor)>,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, moments: Vec::new() }
    }
}

impl AdamState {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let moments = params
            .iter()
            .map(|(_, _, t)| (Tensor::zeros(t.shape()), Tensor::zeros(t.shape())))
            .collect();
        AdamState { lr, moments, ..Default::default() }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn is_initialized(&self) -> bool {
        !self.moments.is_empty()
    }
}

/// One bias-corrected Adam update. Parameters without a gradient entry are
/// treated as having a zero gradient.
pub fn adam_step(params: &mut ParamStore, grads: &Gradients, state: &mut AdamState) -> Result<(), TensorError> {
    if !state.is_initialized() && !params.is_empty() {
        return Err(TensorError::Contract("adam_step on an uninitialized optimizer state".into()));
    }
    if state.moments.len() != params.len() {
        return Err(TensorError::Contract(format!(
            "optimizer tracks {} parameters, store has {}",
            state.moments.len(),
            params.len()
        )));
    }
    state.t += 1;
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.eps, state.lr);
    let bc1 = 1.0 - math::powi(b1, state.t as i32);
    let bc2 = 1.0 - math::powi(b2, state.t as i32);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let (m, v) = &mut state.moments[id.index()];
        let p = params.get_mut(id);
        if m.shape() != p.shape() {
            return Err(TensorError::shape("adam_step", format!("moment {:?} vs param {:?}", m.shape(), p.shape())));
        }
        let g = grads.get(id);
        if let Some(g) = g {
            if g.shape() != p.shape() {
                return Err(TensorError::shape("adam_step", format!("grad {:?} vs param {:?}", g.shape(), p.shape())));
            }
        }
        let (md, vd, pd) = (m.data_mut(), v.data_mut(), p.data_mut());
        for k in 0..pd.len() {
            let gk = g.map_or(0.0, |g| g.data()[k]);
            md[k] = b1 * md[k] + (1.0 - b1) * gk;
            vd[k] = b2 * vd[k] + (1.0 - b2) * gk * gk;
            let mh = md[k] / bc1;
            let vh = vd[k] / bc2;
            pd[k] -= lr * mh / (math::sqrt(vh) + eps);
        }
    }
    Ok(())
}
