//! Adam optimizer over a flat parameter vector, with the usual
//! bias-corrected first and second moments.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update: `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "adam state holds {} parameters, got {}/{}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_never_moves_weights() {
        let mut state = AdamState::new(4);
        let mut params = vec![1.0, -2.0, 0.5, 3.0];
        let before = params.clone();
        for _ in 0..25 {
            state
                .step(&mut params, &[0.0; 4], 1e-3, 0.9, 0.999, 1e-8)
                .unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        // Bias correction makes m_hat = v_hat = 1 on the first step, so the
        // update is -lr / (1 + eps) for every component.
        let mut state = AdamState::new(3);
        let mut params = vec![0.0; 3];
        state
            .step(&mut params, &[1.0; 3], 1e-3, 0.9, 0.999, 1e-8)
            .unwrap();
        for p in params {
            assert!((p + 1e-3).abs() < 1e-10, "got {p}");
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut state = AdamState::new(2);
        let mut params = vec![0.0; 3];
        assert!(state
            .step(&mut params, &[1.0; 3], 1e-3, 0.9, 0.999, 1e-8)
            .is_err());
    }
}
