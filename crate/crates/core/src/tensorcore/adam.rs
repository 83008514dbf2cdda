use super::mlp::{GradSet, Gradients, MlpModel, ParamSet};
use crate::{Error, Result};

/// Adam optimizer state with optional decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new<P: ParamSet + ?Sized>(params: &P, learning_rate: f64, weight_decay: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {learning_rate}")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::config(format!("weight decay must be non-negative, got {weight_decay}")));
        }
        let zeros: Vec<Vec<f64>> = params
            .param_slices()
            .iter()
            .map(|s| vec![0.0; s.len()])
            .collect();
        Ok(AdamState {
            second_moment: zeros.clone(),
            first_moment: zeros,
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected Adam update. Weight decay `θ ← θ(1 − lr·wd)` is applied
    /// before the Adam delta.
    pub fn step<P, G>(&mut self, params: &mut P, grads: &G) -> Result<()>
    where
        P: ParamSet + ?Sized,
        G: GradSet + ?Sized,
    {
        let grad_slices = grads.grad_slices();
        let mut param_slices = params.param_slices_mut();
        if grad_slices.len() != param_slices.len()
            || grad_slices.len() != self.first_moment.len()
            || grad_slices
                .iter()
                .zip(&self.first_moment)
                .zip(&param_slices)
                .any(|((g, m), p)| g.len() != m.len() || p.len() != m.len())
        {
            return Err(Error::config("gradient, parameter and optimizer shapes differ"));
        }
        if let Some(bad) = grad_slices.iter().flat_map(|g| g.iter()).find(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: self.step_count as usize,
                reason: format!("non-finite gradient entry {bad}"),
                snapshot: String::new(),
            });
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let lr = self.learning_rate;
        let decay = 1.0 - lr * self.weight_decay;

        for (((p, g), m), v) in param_slices
            .iter_mut()
            .zip(&grad_slices)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                if self.weight_decay > 0.0 {
                    p[i] *= decay;
                }
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Apply one Adam update to an MLP.
pub fn adam_step(model: &mut MlpModel, state: &mut AdamState, grads: &Gradients) -> Result<()> {
    state.step(model, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorcore::mlp::{Activation, Dense};
    use ndarray::array;

    fn scalar(theta: f64) -> MlpModel {
        MlpModel::from_layers(
            vec![Dense {
                weight: array![[theta]],
                bias: array![0.0],
            }],
            Activation::Identity,
        )
        .unwrap()
    }

    fn grad(g: f64) -> Gradients {
        Gradients {
            layers: vec![Dense {
                weight: array![[g]],
                bias: array![0.0],
            }],
        }
    }

    #[test]
    fn first_step_moves_by_signed_learning_rate() {
        let mut m = scalar(1.0);
        let mut s = AdamState::new(&m, 3e-4, 0.0).unwrap();
        adam_step(&mut m, &mut s, &grad(0.5)).unwrap();
        let delta = 1.0 - m.layers()[0].weight[[0, 0]];
        assert!((delta - 3e-4 * 0.5 / (0.5 + 1e-8)).abs() < 1e-9);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut m = scalar(0.7);
        let before = m.clone();
        let mut s = AdamState::new(&m, 3e-4, 0.0).unwrap();
        for _ in 0..10 {
            adam_step(&mut m, &mut s, &grad(0.0)).unwrap();
        }
        assert_eq!(m, before);
        assert_eq!(s.step_count(), 10);
    }

    #[test]
    fn decoupled_weight_decay_only() {
        let mut m = scalar(1.0);
        let mut s = AdamState::new(&m, 3e-4, 0.005).unwrap();
        adam_step(&mut m, &mut s, &grad(0.0)).unwrap();
        assert!((m.layers()[0].weight[[0, 0]] - 0.9999985).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut m = scalar(1.0);
        let mut s = AdamState::new(&m, 3e-4, 0.0).unwrap();
        let err = adam_step(&mut m, &mut s, &grad(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
        assert_eq!(s.step_count(), 0);
    }

    #[test]
    fn rejects_bad_learning_rate() {
        assert!(AdamState::new(&scalar(0.0), 0.0, 0.0).is_err());
        assert!(AdamState::new(&scalar(0.0), 1e-3, -1.0).is_err());
    }
}
