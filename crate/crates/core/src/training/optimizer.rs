use serde::{Deserialize, Serialize};

use crate::autodiff::{ModelParams, ParamGradient};
use crate::{Error, Result};

/// AdamW hyperparameters (decoupled weight decay).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// First and second moment estimates plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            steps: 0,
        }
    }
}

/// One AdamW update with learning rate `lr`:
/// `p ← p − lr·(m̂/(√v̂ + ε) + λ·p)` with bias-corrected moments.
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &ParamGradient,
    state: &mut AdamState,
    cfg: &AdamWConfig,
    lr: f64,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::Divergence {
            iteration: None,
            loss: f64::NAN,
            last_finite_loss: None,
        });
    }
    let n = params.num_params();
    if state.m.len() != n || state.v.len() != n {
        return Err(Error::Dimension {
            context: "optimizer state",
            expected: n,
            got: state.m.len(),
        });
    }
    state.steps += 1;
    let k = state.steps as i32;
    let c1 = 1.0 - cfg.beta1.powi(k);
    let c2 = 1.0 - cfg.beta2.powi(k);
    for (((p, g), m), v) in params
        .values_mut()
        .zip(grads.values())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        let step = if m_hat == 0.0 { 0.0 } else { m_hat / (v_hat.sqrt() + cfg.eps) };
        *p -= lr * (step + cfg.weight_decay * *p);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{DenseNetwork, Layer};
    use ndarray::{arr1, arr2};

    /// A single weight `p` (the zero bias is the second parameter).
    fn scalar(p: f64) -> ModelParams {
        ModelParams::new(vec![DenseNetwork::new(vec![Layer {
            weights: arr2(&[[p]]),
            bias: arr1(&[0.0]),
        }])
        .unwrap()])
    }

    fn grad_of(params: &ModelParams, g: f64) -> ParamGradient {
        let mut grad = ParamGradient::zeros_like(params);
        *grad.values_mut().next().unwrap() = g;
        grad
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = scalar(0.7);
        let before = p.clone();
        let mut st = AdamState::new(p.num_params());
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let g = grad_of(&p, 0.0);
        adamw_step(&mut p, &g, &mut st, &cfg, 1e-3).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn sign_step_limit() {
        let mut p = scalar(1.0);
        let mut st = AdamState::new(p.num_params());
        let cfg = AdamWConfig {
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
            weight_decay: 0.0,
        };
        let g = grad_of(&p, 1.0);
        adamw_step(&mut p, &g, &mut st, &cfg, 0.1).unwrap();
        assert!((p.values().next().unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn decoupled_decay_only() {
        let mut p = scalar(2.0);
        let mut st = AdamState::new(p.num_params());
        let cfg = AdamWConfig {
            weight_decay: 0.01,
            ..Default::default()
        };
        let g = grad_of(&p, 0.0);
        adamw_step(&mut p, &g, &mut st, &cfg, 0.5).unwrap();
        assert_eq!(*p.values().next().unwrap(), 2.0 * (1.0 - 0.5 * 0.01));
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut p = scalar(1.0);
        let mut st = AdamState::new(p.num_params());
        let g = grad_of(&p, f64::NAN);
        let r = adamw_step(&mut p, &g, &mut st, &AdamWConfig::default(), 1e-3);
        assert!(matches!(r, Err(Error::Divergence { .. })));
    }
}
