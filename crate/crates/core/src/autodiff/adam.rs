//! Adam with bias correction, one state per parameter group.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("non-finite gradient in parameter group '{group}' at index {index}")]
    NonFiniteGradient { group: String, index: usize },
    #[error("gradient length {got} does not match parameter length {want} in group '{group}'")]
    ShapeMismatch { group: String, got: usize, want: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment accumulators for one parameter group.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(len: usize, hyper: AdamHyper) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0, hyper }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update. `group` only labels errors.
    pub fn step(
        &mut self,
        group: &str,
        params: &mut [f64],
        grads: &[f64],
        lr: f64,
    ) -> Result<(), OptimError> {
        if grads.len() != params.len() || params.len() != self.m.len() {
            return Err(OptimError::ShapeMismatch {
                group: group.to_string(),
                got: grads.len(),
                want: params.len(),
            });
        }
        for (i, g) in grads.iter().enumerate() {
            if !g.is_finite() {
                return Err(OptimError::NonFiniteGradient { group: group.to_string(), index: i });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let AdamHyper { beta1, beta2, eps } = self.hyper;
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

    /// Raw accessors for checkpointing.
    pub fn moments(&self) -> (&[f64], &[f64], u64) {
        (&self.m, &self.v, self.step)
    }

    pub fn restore(m: Vec<f64>, v: Vec<f64>, step: u64, hyper: AdamHyper) -> Self {
        assert_eq!(m.len(), v.len());
        Self { m, v, step, hyper }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_fresh_params_unchanged() {
        let mut st = AdamState::new(3, AdamHyper::default());
        let mut p = vec![1.0, -2.0, 0.5];
        let before = p.clone();
        st.step("g", &mut p, &[0.0, 0.0, 0.0], 0.1).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn descends_on_quadratic() {
        let mut st = AdamState::new(1, AdamHyper::default());
        let mut p = vec![1.0];
        // f(x) = x^2, grad = 2x
        let g = [2.0 * p[0]];
        st.step("g", &mut p, &g, 0.1).unwrap();
        assert!(p[0] < 1.0);
    }

    #[test]
    fn converges_on_2d_quadratic() {
        // f(x, y) = (x - 3)^2 + 2 (y + 1)^2
        let mut st = AdamState::new(2, AdamHyper::default());
        let mut p = vec![0.0, 0.0];
        for _ in 0..200 {
            let g = [2.0 * (p[0] - 3.0), 4.0 * (p[1] + 1.0)];
            st.step("g", &mut p, &g, 0.1).unwrap();
        }
        assert!((p[0] - 3.0).abs() < 1e-3, "x = {}", p[0]);
        assert!((p[1] + 1.0).abs() < 1e-3, "y = {}", p[1]);
    }

    #[test]
    fn nan_gradient_names_group() {
        let mut st = AdamState::new(1, AdamHyper::default());
        let mut p = vec![1.0];
        let err = st.step("anchor-features", &mut p, &[f64::NAN], 0.1).unwrap_err();
        assert!(err.to_string().contains("anchor-features"));
    }
}
