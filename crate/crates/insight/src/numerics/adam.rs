//! Adam optimizer and cosine learning-rate schedule.

use super::layers::Parameter;

/// Adam moment hyperparameters. Learning rate is passed per step so a
/// schedule can drive it.
#[derive(Debug, Clone, Copy)]
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

/// Cosine annealing from `lr_max` at step 0 to exactly `lr_min` at
/// `total_steps`.
#[derive(Debug, Clone, Copy)]
pub struct CosineSchedule {
    pub lr_max: f64,
    pub lr_min: f64,
    pub total_steps: usize,
}

impl CosineSchedule {
    pub fn lr(&self, step: usize) -> f64 {
        if self.total_steps == 0 || step >= self.total_steps {
            return self.lr_min;
        }
        let frac = step as f64 / self.total_steps as f64;
        self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam state over an ordered parameter list. The caller must pass the
/// same parameters in the same order on every step; state is matched
/// by position.
pub struct Adam {
    config: AdamConfig,
    step: usize,
    slots: Vec<Slot>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            slots: Vec::new(),
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Applies one update from the gradients currently stored in each
    /// parameter. Does not clear them; callers zero grads before the
    /// next backward pass.
    pub fn step(&mut self, lr: f64, params: &mut [&mut Parameter]) {
        if self.slots.is_empty() {
            self.slots = params
                .iter()
                .map(|p| Slot {
                    m: vec![0.0; p.len()],
                    v: vec![0.0; p.len()],
                })
                .collect();
        }
        assert_eq!(self.slots.len(), params.len(), "parameter list changed size");

        self.step += 1;
        let t = self.step as i32;
        let (b1, b2, eps) = (self.config.beta1, self.config.beta2, self.config.eps);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);

        for (slot, p) in self.slots.iter_mut().zip(params.iter_mut()) {
            assert_eq!(slot.m.len(), p.len(), "parameter shape changed");
            let grads = p.grad.data();
            let values = p.value.data_mut();
            for i in 0..values.len() {
                let g = grads[i];
                slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * g;
                slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * g * g;
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
