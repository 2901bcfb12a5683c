//! Bias-corrected Adam over flat parameter vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64) -> Self {
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64, eps: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self.eps = eps;
        self
    }

    /// One optimizer step, updating `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam_step: state holds {} params, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(idx) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite gradient at parameter index {idx}"
            )));
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut st = AdamState::new(3, 1e-3);
        let mut params = vec![1.0, -2.0, 0.5];
        st.step(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
        assert!(st.m.iter().all(|&x| x == 0.0));
        assert!(st.v.iter().all(|&x| x == 0.0));
        assert_eq!(st.step, 1);
    }

    #[test]
    fn one_step_hand_computation() {
        // theta=0, g=1: m_hat = v_hat = 1, so theta' = -lr / (1 + eps)
        let mut st = AdamState::new(1, 1e-3);
        let mut params = vec![0.0];
        st.step(&mut params, &[1.0]).unwrap();
        assert!((params[0] + 1e-3).abs() < 1e-9);
    }

    #[test]
    fn two_steps_constant_gradient() {
        let mut st = AdamState::new(1, 1e-3);
        let mut params = vec![0.0];
        st.step(&mut params, &[1.0]).unwrap();
        st.step(&mut params, &[1.0]).unwrap();
        // with constant unit gradient each bias-corrected update is ~ -lr
        assert!((params[0] + 2e-3).abs() < 1e-6);
        assert_eq!(st.step, 2);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut st = AdamState::new(2, 1e-3);
        let mut params = vec![0.0, 0.0];
        let err = st.step(&mut params, &[0.0, f64::NAN]).unwrap_err();
        assert!(err.to_string().contains("index 1"));
    }
}
