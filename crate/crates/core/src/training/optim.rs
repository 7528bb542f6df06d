use crate::error::{Error, Result};

/// Adam moment accumulators, one buffer per parameter tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub state: OptimizerState,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW::new(0.01)
    }
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            state: OptimizerState::default(),
        }
    }

    /// One update of every tensor in `params` with learning rate `lr`.
    /// Non-finite gradients abort the step before anything is modified.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                actual: grads.len(),
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::DimensionMismatch {
                    expected: p.len(),
                    actual: g.len(),
                });
            }
        }
        for (t, g) in grads.iter().enumerate() {
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: format!("gradient of tensor {t}"),
                    index: i,
                });
            }
        }
        if self.state.m.is_empty() {
            self.state.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.state.v = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        self.state.step += 1;
        let t = self.state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - lr * self.weight_decay;
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.state.m.iter_mut().zip(self.state.v.iter_mut()))
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = p[i] * decay - lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Linear warm-up from 0 to `base_lr` over `warmup` steps, then linear decay
/// to 0 at `total_steps`.
pub fn lr_schedule(step: u64, warmup: u64, total_steps: u64, base_lr: f64) -> f64 {
    if step <= warmup {
        if warmup == 0 {
            return base_lr;
        }
        return base_lr * step as f64 / warmup as f64;
    }
    if step >= total_steps {
        return 0.0;
    }
    base_lr * (total_steps - step) as f64 / (total_steps - warmup) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_zero_decay_is_noop() {
        let mut opt = AdamW::new(0.0);
        let mut p = vec![1.5, -2.0];
        opt.step(&mut [&mut p], &[&[0.0, 0.0]], 0.1).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut opt = AdamW::new(0.0);
        let mut p = vec![1.0];
        opt.step(&mut [&mut p], &[&[1.0]], 0.1).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        assert!((p[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn decay_only_scales() {
        let mut opt = AdamW::new(0.01);
        let mut p = vec![2.0, -4.0];
        opt.step(&mut [&mut p], &[&[0.0, 0.0]], 0.5).unwrap();
        assert_eq!(p, vec![2.0 * (1.0 - 0.005), -4.0 * (1.0 - 0.005)]);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut opt = AdamW::default();
        let mut p = vec![1.0];
        assert!(opt.step(&mut [&mut p], &[&[f64::INFINITY]], 0.1).is_err());
        assert_eq!(p, vec![1.0]);
        assert_eq!(opt.state.step, 0);
    }

    #[test]
    fn schedule_shape() {
        assert_eq!(lr_schedule(0, 100, 1000, 0.1), 0.0);
        assert_eq!(lr_schedule(100, 100, 1000, 0.1), 0.1);
        assert!((lr_schedule(550, 100, 1000, 0.1) - 0.05).abs() < 1e-12);
        assert_eq!(lr_schedule(1000, 100, 1000, 0.1), 0.0);
        assert!((lr_schedule(50, 100, 1000, 0.1) - 0.05).abs() < 1e-15);
    }
}
