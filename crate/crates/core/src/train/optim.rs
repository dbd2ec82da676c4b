//! Adam with step-decayed learning rate and box clipping.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// The learning rate halves every this many epochs.
    pub halve_every: usize,
    /// Clip updated weights into `clip_range`.
    pub clip: bool,
    pub clip_range: (f64, f64),
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            halve_every: 20,
            clip: true,
            clip_range: (0.0, 2.0),
        }
    }
}

impl AdamConfig {
    /// `base_lr · 2^(-⌊epoch / halve_every⌋)`.
    pub fn lr(&self, epoch: usize) -> f64 {
        let halvings = (epoch / self.halve_every.max(1)).min(1000) as i32;
        self.base_lr * 0.5f64.powi(halvings)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    /// One update of the parameters selected by `mask`.
    pub fn apply(&mut self, params: &mut [f64], grad: &[f64], mask: &[bool], epoch: usize) {
        let c = self.config;
        self.step += 1;
        let t = self.step.min(i32::MAX as u64) as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let lr = c.lr(epoch);
        for i in 0..params.len() {
            if !mask[i] {
                continue;
            }
            let g = grad[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let delta = lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + c.eps);
            if delta != 0.0 {
                let mut p = params[i] - delta;
                if c.clip {
                    p = p.clamp(c.clip_range.0, c.clip_range.1);
                }
                params[i] = p;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule() {
        let c = AdamConfig::default();
        assert_eq!(c.lr(0), 1e-3);
        assert_eq!(c.lr(19), 1e-3);
        assert_eq!(c.lr(20), 5e-4);
        assert_eq!(c.lr(40), 2.5e-4);
        for e in 0..200 {
            assert!(c.lr(e + 1) <= c.lr(e));
        }
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut st = OptimizerState::new(AdamConfig::default(), 3);
        let mut p = vec![1.0, 2.5, -0.3];
        let before = p.clone();
        for e in 0..10 {
            st.apply(&mut p, &[0.0; 3], &[true; 3], e);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut st = OptimizerState::new(AdamConfig::default(), 2);
        let mut p = vec![1.0, 1.0];
        st.apply(&mut p, &[0.3, -2.0], &[true, true], 0);
        // bias-corrected first step is lr · sign(g)
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (1.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn masked_and_clipped() {
        let mut c = AdamConfig::default();
        c.base_lr = 10.0;
        let mut st = OptimizerState::new(c, 2);
        let mut p = vec![1.0, 1.0];
        st.apply(&mut p, &[-1.0, -1.0], &[true, false], 0);
        assert_eq!(p, vec![2.0, 1.0]);
    }
}
