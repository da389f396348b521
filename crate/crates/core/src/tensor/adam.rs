//! Adam with bias correction and decoupled weight decay.

use super::{Tensor, TensorError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Per-parameter first/second moment accumulators plus the step counter.
pub struct OptimizerState {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl OptimizerState {
    pub fn new(param_sizes: &[usize], cfg: AdamConfig) -> Self {
        OptimizerState {
            cfg,
            step: 0,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// One update over all parameters. `params[i]` and `grads[i]` must have
    /// matching lengths, in the same order as at construction.
    pub fn adam_step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Vec<f32>],
    ) -> Result<(), TensorError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                detail: format!(
                    "{} params / {} grads vs {} state slots",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            });
        }
        for (i, p) in params.iter().enumerate() {
            if p.numel() != self.m[i].len() || grads[i].len() != self.m[i].len() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    detail: format!("param {i}: size mismatch"),
                });
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let c = self.cfg;
        let bc1 = 1.0 - (c.beta1 as f64).powf(t);
        let bc2 = 1.0 - (c.beta2 as f64).powf(t);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let data = param.data_mut();
            for i in 0..data.len() {
                let g = grad[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                let m_hat = m[i] as f64 / bc1;
                let v_hat = v[i] as f64 / bc2;
                let update = m_hat / (v_hat.sqrt() + c.eps as f64)
                    + c.weight_decay as f64 * data[i] as f64;
                data[i] -= (c.lr as f64 * update) as f32;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f32) -> Tensor {
        Tensor::scalar(v).with_requires_grad(true)
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = scalar_param(0.7);
        let mut state = OptimizerState::new(&[1], AdamConfig::default());
        state.adam_step(&mut [&mut p], &[vec![0.0]]).unwrap();
        assert_eq!(p.data()[0], 0.7);
    }

    #[test]
    fn single_step_matches_hand_computation() {
        // lr=0.1, g=1: bias-corrected m_hat = 1, v_hat = 1, so the update is
        // lr * 1/(1+eps) ~= 0.1.
        let mut p = scalar_param(2.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut state = OptimizerState::new(&[1], cfg);
        state.adam_step(&mut [&mut p], &[vec![1.0]]).unwrap();
        assert!((p.data()[0] - 1.9).abs() < 1e-6, "got {}", p.data()[0]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn identical_inputs_give_identical_updates() {
        let grads = vec![vec![0.3, -1.2, 0.01]];
        let run = || {
            let mut p = Tensor::new(vec![3], vec![1.0, -2.0, 0.5])
                .unwrap()
                .with_requires_grad(true);
            let mut state = OptimizerState::new(&[3], AdamConfig::default());
            for _ in 0..5 {
                state.adam_step(&mut [&mut p], &grads).unwrap();
            }
            p.data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = scalar_param(1.0);
        let mut state = OptimizerState::new(&[2], AdamConfig::default());
        assert!(state.adam_step(&mut [&mut p], &[vec![1.0, 2.0]]).is_err());
    }
}
