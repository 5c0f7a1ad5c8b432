use std::f64::consts::PI;

use super::model::{Gradients, ModelParams, ParamGroup};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates plus a step counter per parameter group. A group's
/// counter only advances while the group is being updated, so bias
/// correction restarts cleanly when a group is unfrozen mid-run.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub steps: [u64; 3],
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Tensor> = params
            .params
            .iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            steps: [0; 3],
        }
    }
}

/// Cosine decay from `lr0` at epoch 0 to zero at epoch `epochs`.
pub fn cosine_lr(step_epoch: f64, epochs: usize, lr0: f64) -> f64 {
    lr0 * (1.0 + (PI * step_epoch / epochs as f64).cos()) / 2.0
}

/// One bias-corrected Adam update. Frozen groups are left untouched,
/// including their moments.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    lr: [f64; 3],
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.0.len() != params.params.len() || state.m.len() != params.params.len() {
        return Err(Error::Input(
            "gradient/state layout does not match parameters".into(),
        ));
    }
    for (p, g) in params.params.iter().zip(&grads.0) {
        if params.frozen[p.group.index()] {
            continue;
        }
        if !g.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient for {}",
                p.name
            )));
        }
    }
    for group in ParamGroup::ALL {
        if !params.is_frozen(group) {
            state.steps[group.index()] += 1;
        }
    }
    let frozen = params.frozen;
    for (idx, p) in params.params.iter_mut().enumerate() {
        let gi = p.group.index();
        if frozen[gi] {
            continue;
        }
        let t = state.steps[gi] as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let m = state.m[idx].data_mut();
        let v = state.v[idx].data_mut();
        for (((w, &g), mi), vi) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(grads.0[idx].data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
            *w -= lr[gi] * (*mi / c1) / ((*vi / c2).sqrt() + cfg.eps);
        }
        if !p.value.is_finite() {
            return Err(Error::Numeric(format!("non-finite update for {}", p.name)));
        }
    }
    Ok(())
}
