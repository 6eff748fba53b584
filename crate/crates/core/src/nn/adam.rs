use crate::error::{Error, Result};
use crate::nn::mlp::check_finite;

/// Adaptive-moment optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one bias-corrected Adam update to `params` in place.
    ///
    /// Nothing is written if the update would produce a non-finite parameter.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "adam state holds {} parameters, got params {} / grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        check_finite(grads, "adam gradient")?;

        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let mut m = self.m.clone();
        let mut v = self.v.clone();
        let mut updated = params.to_vec();
        for i in 0..updated.len() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grads[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            updated[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        check_finite(&updated, "adam update")?;

        params.copy_from_slice(&updated);
        self.m = m;
        self.v = v;
        self.step += 1;
        Ok(())
    }
}
