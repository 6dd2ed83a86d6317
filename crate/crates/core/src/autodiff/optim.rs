use super::Tensor;
use crate::{Error, Result};

/// Adam hyperparameters with decoupled weight decay.
#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// First/second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam step with decoupled weight decay: the decay
/// pulls directly on the weights instead of entering the moments.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(format!(
            "adam: {} params, {} grads, {} states",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), i) in params.iter().zip(grads).zip(0..) {
        if p.len() != g.len() {
            return Err(Error::shape(format!(
                "adam: param {i} has {} values, grad has {}",
                p.len(),
                g.len()
            )));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - hyper.beta1.powf(t);
    let bc2 = 1.0 - hyper.beta2.powf(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let data = p.data_mut();
        for j in 0..data.len() {
            m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
            v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            data[j] -= hyper.lr * (m_hat / (v_hat.sqrt() + hyper.eps))
                + hyper.lr * hyper.weight_decay * data[j];
        }
    }
    Ok(())
}

/// Cosine annealing: lr0 * (1 + cos(pi * step / total)) / 2.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::invalid("cosine schedule needs total_steps > 0"));
    }
    let frac = step as f64 / total_steps as f64;
    Ok(lr0 * (1.0 + (std::f64::consts::PI * frac).cos()) / 2.0)
}
