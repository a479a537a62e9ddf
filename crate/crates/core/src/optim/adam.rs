use serde::{Deserialize, Serialize};

use super::OptimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(OptimError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// Moment accumulators for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// One bias-corrected Adam update. Parameters are left untouched when the
    /// gradient is rejected.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), OptimError> {
        if grads.len() != params.len() || params.len() != self.first_moment.len() {
            return Err(OptimError::ShapeMismatch {
                expected: self.first_moment.len(),
                got: grads.len(),
            });
        }
        if let Some((index, &value)) = grads.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(OptimError::NonFiniteGradient { index, value });
        }
        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut state = AdamState::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 3.0];
        state.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_hand_value() {
        // m̂ = 1, v̂ = 1, so the step is lr / (1 + ε).
        let mut state = AdamState::new(1, AdamConfig::with_learning_rate(1e-3));
        let mut p = vec![0.0];
        state.step(&mut p, &[1.0]).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] + 9.99997e-4).abs() < 1e-8);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut s = AdamState::new(4, AdamConfig::with_learning_rate(0.01));
            let mut p = vec![0.1, 0.2, 0.3, 0.4];
            for k in 0..50 {
                let g: Vec<f64> = p.iter().map(|x| x * (k as f64).sin()).collect();
                s.step(&mut p, &g).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn constant_gradient_step_converges_to_lr() {
        let lr = 1e-3;
        let mut s = AdamState::new(1, AdamConfig::with_learning_rate(lr));
        let mut p = vec![0.0];
        let mut last = 0.0;
        for _ in 0..1000 {
            last = p[0];
            s.step(&mut p, &[0.37]).unwrap();
        }
        let displacement = (p[0] - last).abs();
        assert!((displacement - lr).abs() < 0.01 * lr, "{displacement}");
    }

    #[test]
    fn rejects_non_finite_with_index() {
        let mut s = AdamState::new(3, AdamConfig::default());
        let mut p = vec![0.0; 3];
        let err = s.step(&mut p, &[0.0, f64::NAN, 1.0]).unwrap_err();
        assert!(matches!(err, OptimError::NonFiniteGradient { index: 1, .. }));
        assert_eq!(s.step_count(), 0);
        assert_eq!(p, vec![0.0; 3]);
    }
}
