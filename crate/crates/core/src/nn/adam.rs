use crate::error::{Error, Result};
use crate::scalar::Real;

use super::network::Gradients;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for a fixed list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Real> {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, sizes: impl IntoIterator<Item = usize>) -> Self {
        let (first, second) = sizes
            .into_iter()
            .map(|n| (vec![T::zero(); n], vec![T::zero(); n]))
            .unzip();
        Self {
            config,
            step: 0,
            first,
            second,
        }
    }

    /// One bias-corrected update of `params` in place.
    pub fn update(&mut self, params: Vec<&mut [T]>, grads: &Gradients<T>) -> Result<()> {
        if params.len() != self.first.len()
            || grads.0.len() != params.len()
            || params
                .iter()
                .zip(&grads.0)
                .zip(&self.first)
                .any(|((p, g), m)| p.len() != g.len() || p.len() != m.len())
        {
            return Err(Error::Dimension("parameter, gradient and moment shapes differ".into()));
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let correction1 = T::one() - T::lit(c.beta1.powf(self.step as f64));
        let correction2 = T::one() - T::lit(c.beta2.powf(self.step as f64));
        let (lr, eps) = (T::lit(c.learning_rate), T::lit(c.epsilon));
        for (((param, grad), m), v) in params
            .into_iter()
            .zip(&grads.0)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (T::one() - b1) * g;
                v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut state = AdamState::<f64>::new(AdamConfig::default(), [3]);
        let mut p = vec![1.0, -2.0, 0.5];
        state.update(vec![&mut p[..]], &Gradients(vec![vec![0.0; 3]])).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.0, -0.02, 1e-4] {
            let mut state = AdamState::<f64>::new(AdamConfig::default(), [1]);
            let mut p = vec![0.0];
            state.update(vec![&mut p[..]], &Gradients(vec![vec![g]])).unwrap();
            // m_hat = g and v_hat = g^2 after bias correction
            let expected = 1e-3 * g.abs() / (g.abs() + 1e-8);
            assert!((p[0].abs() - expected).abs() < 1e-15);
            assert!(p[0].signum() == -g.signum());
        }
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut state = AdamState::<f64>::new(AdamConfig::default(), [2]);
        let mut p = vec![0.0; 3];
        assert!(state.update(vec![&mut p[..]], &Gradients(vec![vec![0.0; 3]])).is_err());
    }
}
