use crate::error::{Error, Result};

use super::net::NamedTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[NamedTensor]) -> Self {
        AdamState {
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.tensor.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.tensor.len()]).collect(),
        }
    }
}

/// One bias-corrected Adam update using each parameter's stored gradient
/// (absent gradients count as zero). Nothing is modified if any gradient is
/// non-finite.
pub fn adam_step(params: &mut [NamedTensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Usage(format!(
            "optimizer state tracks {} parameters, got {}",
            state.m.len(),
            params.len()
        )));
    }
    for (p, m) in params.iter().zip(&state.m) {
        if m.len() != p.tensor.len() || p.tensor.grad.as_ref().is_some_and(|g| g.len() != m.len()) {
            return Err(Error::shape("adam_step", &[m.len()], p.tensor.shape()));
        }
        if p.tensor.grad.as_ref().is_some_and(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let Some(grad) = p.tensor.grad.take() else {
            m.iter_mut().for_each(|x| *x *= cfg.beta1);
            v.iter_mut().for_each(|x| *x *= cfg.beta2);
            continue;
        };
        for (((w, g), mi), vi) in p.tensor.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *w -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
        p.tensor.grad = Some(grad);
    }
    Ok(())
}
