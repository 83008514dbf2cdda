use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::tensorcore::{Activation, GradSet, Gradients, MlpModel, ParamSet};
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Diagonal Gaussian policy: tanh-bounded MLP mean and a state-independent log-std.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean_net: MlpModel,
    pub log_std: Vec<f64>,
    pub action_bound: f64,
}

/// Gradient of a scalar objective with respect to a [`GaussianPolicy`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradients {
    pub mean: Gradients,
    pub log_std: Vec<f64>,
}

impl PolicyGradients {
    pub fn zeros_like(policy: &GaussianPolicy) -> Self {
        PolicyGradients {
            mean: Gradients::zeros_like(&policy.mean_net),
            log_std: vec![0.0; policy.log_std.len()],
        }
    }

    pub fn add_scaled(&mut self, other: &PolicyGradients, scale: f64) {
        self.mean.add_scaled(&other.mean, scale);
        for (a, b) in self.log_std.iter_mut().zip(&other.log_std) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mean.is_finite() && self.log_std.iter().all(|v| v.is_finite())
    }
}

impl ParamSet for GaussianPolicy {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.mean_net.param_slices();
        v.push(&self.log_std);
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.mean_net.param_slices_mut();
        v.push(&mut self.log_std);
        v
    }
}

impl GradSet for PolicyGradients {
    fn grad_slices(&self) -> Vec<&[f64]> {
        let mut v = self.mean.grad_slices();
        v.push(&self.log_std);
        v
    }
}

impl GaussianPolicy {
    /// `n_layers` dense layers of width `hidden`; log-std starts at 0 (σ = 1).
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
        n_layers: usize,
        action_bound: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n_layers < 1 {
            return Err(Error::config("policy needs at least one layer"));
        }
        let mut dims = vec![state_dim];
        dims.extend(std::iter::repeat_n(hidden, n_layers - 1));
        dims.push(action_dim);
        Ok(GaussianPolicy {
            mean_net: MlpModel::new(&dims, Activation::Tanh, rng)?,
            log_std: vec![0.0; action_dim],
            action_bound,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.mean_net.output_dim()
    }

    /// Deterministic mean action, within ±action_bound.
    pub fn act(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .mean_net
            .forward(s)?
            .into_iter()
            .map(|m| self.action_bound * m)
            .collect())
    }

    pub fn act_batch(&self, states: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.mean_net.forward_batch(states)? * self.action_bound)
    }

    /// `log π(a|s)` of the diagonal Gaussian.
    pub fn log_prob(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        if a.len() != self.action_dim() {
            return Err(Error::config(format!(
                "policy has {} action dims, got {}",
                self.action_dim(),
                a.len()
            )));
        }
        let mean = self.act(s)?;
        Ok(mean
            .iter()
            .zip(a)
            .zip(&self.log_std)
            .map(|((&m, &x), &ls)| {
                let u = (x - m) / ls.exp();
                -0.5 * u * u - ls - HALF_LN_2PI
            })
            .sum())
    }

    /// `(1/n) Σᵢ wᵢ · (−log π(aᵢ|sᵢ))` over the rows, with its gradient.
    pub fn weighted_nll(
        &self,
        states: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
        weights: &[f64],
    ) -> Result<(f64, PolicyGradients)> {
        let n = states.nrows();
        if actions.nrows() != n || weights.len() != n || n == 0 {
            return Err(Error::config("weighted_nll needs matching, non-empty rows"));
        }
        if actions.ncols() != self.action_dim() {
            return Err(Error::config("action width does not match the policy"));
        }
        let trace = self.mean_net.forward_trace(states)?;
        let bound = self.action_bound;
        let inv_var: Vec<f64> = self.log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
        let mut out_grad = Array2::zeros(trace.output.dim());
        let mut log_std_grad = vec![0.0; self.action_dim()];
        let mut total = 0.0;
        let nf = n as f64;
        for i in 0..n {
            let w = weights[i];
            if w == 0.0 {
                continue;
            }
            for j in 0..self.action_dim() {
                let mean = bound * trace.output[[i, j]];
                let diff = actions[[i, j]] - mean;
                let sq = diff * diff * inv_var[j];
                total += w * (0.5 * sq + self.log_std[j] + HALF_LN_2PI);
                // d(−log π)/dμ = −diff/σ², and dμ/d(net output) = bound
                out_grad[[i, j]] = -w * diff * inv_var[j] * bound / nf;
                log_std_grad[j] += w * (1.0 - sq) / nf;
            }
        }
        let (mean_grads, _) = self.mean_net.backward(&trace, out_grad.view())?;
        Ok((
            total / nf,
            PolicyGradients {
                mean: mean_grads,
                log_std: log_std_grad,
            },
        ))
    }

    /// Gradient of `(1/n) Σᵢ gᵢ · μ(sᵢ)` where `action_grad` holds the rows `gᵢ`; used to
    /// push the mean action along a critic's action gradient.
    pub fn mean_action_backward(
        &self,
        states: ArrayView2<'_, f64>,
        action_grad: ArrayView2<'_, f64>,
    ) -> Result<PolicyGradients> {
        let trace = self.mean_net.forward_trace(states)?;
        let scaled = action_grad.to_owned() * self.action_bound;
        let (mean_grads, _) = self.mean_net.backward(&trace, scaled.view())?;
        Ok(PolicyGradients {
            mean: mean_grads,
            log_std: vec![0.0; self.action_dim()],
        })
    }

    pub fn clamp_log_std(&mut self) {
        for ls in &mut self.log_std {
            *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mean_net.is_finite() && self.log_std.iter().all(|v| v.is_finite())
    }
}
