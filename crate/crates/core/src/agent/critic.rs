use ndarray::{s, Array2, ArrayView2};
use rand::Rng;

use super::policy::GaussianPolicy;
use crate::data::Batch;
use crate::tensorcore::{Activation, Gradients, MlpModel};
use crate::{Error, Result};

/// Twin Q-networks over `[s | a]` with Polyak-averaged target copies.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticPair {
    pub q1: MlpModel,
    pub q2: MlpModel,
    pub q1_target: MlpModel,
    pub q2_target: MlpModel,
    pub polyak_rho: f64,
    /// Use only `q1` (and its target) everywhere.
    pub single_critic: bool,
}

/// Critic regression loss with per-network gradients.
#[derive(Debug, Clone)]
pub struct CriticLoss {
    pub loss: f64,
    pub q1: Gradients,
    pub q2: Option<Gradients>,
}

impl CriticPair {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
        n_layers: usize,
        polyak_rho: f64,
        single_critic: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if n_layers < 1 {
            return Err(Error::config("critic needs at least one layer"));
        }
        let mut dims = vec![state_dim + action_dim];
        dims.extend(std::iter::repeat_n(hidden, n_layers - 1));
        dims.push(1);
        let q1 = MlpModel::new(&dims, Activation::Identity, rng)?;
        let q2 = MlpModel::new(&dims, Activation::Identity, rng)?;
        Ok(CriticPair {
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
            polyak_rho,
            single_critic,
        })
    }

    fn min_of(&self, a: &MlpModel, b: &MlpModel, sa: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let first = a.forward_batch(sa)?;
        if self.single_critic {
            return Ok(first.column(0).to_vec());
        }
        let second = b.forward_batch(sa)?;
        Ok(first
            .column(0)
            .iter()
            .zip(second.column(0))
            .map(|(x, y)| x.min(*y))
            .collect())
    }

    /// `min(q1_target, q2_target)` on each `[s | a]` row.
    pub fn target_min(&self, state_actions: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.min_of(&self.q1_target, &self.q2_target, state_actions)
    }

    /// `min(q1, q2)` on each `[s | a]` row.
    pub fn online_min(&self, state_actions: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.min_of(&self.q1, &self.q2, state_actions)
    }

    /// `min(q1, q2)(s, a)` per row and its gradient with respect to `a`. Ties pick `q1`.
    pub fn online_min_action_grad(
        &self,
        states: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
    ) -> Result<(Vec<f64>, Array2<f64>)> {
        let sd = states.ncols();
        let sa = ndarray::concatenate(ndarray::Axis(1), &[states, actions])
            .map_err(|_| Error::config("state and action rows differ"))?
            .as_standard_layout()
            .into_owned();
        let n = sa.nrows();
        let t1 = self.q1.forward_trace(sa.view())?;
        let (values, pick_first): (Vec<f64>, Vec<bool>) = if self.single_critic {
            (t1.output.column(0).to_vec(), vec![true; n])
        } else {
            let t2 = self.q2.forward_batch(sa.view())?;
            t1.output
                .column(0)
                .iter()
                .zip(t2.column(0))
                .map(|(&a, &b)| if a <= b { (a, true) } else { (b, false) })
                .unzip()
        };
        let g1 = Array2::from_shape_fn((n, 1), |(i, _)| if pick_first[i] { 1.0 } else { 0.0 });
        let (_, mut input_grad) = self.q1.backward(&t1, g1.view())?;
        if !self.single_critic && pick_first.iter().any(|p| !p) {
            let t2 = self.q2.forward_trace(sa.view())?;
            let g2 = Array2::from_shape_fn((n, 1), |(i, _)| if pick_first[i] { 0.0 } else { 1.0 });
            let (_, ig2) = self.q2.backward(&t2, g2.view())?;
            input_grad += &ig2;
        }
        Ok((values, input_grad.slice(s![.., sd..]).to_owned()))
    }

    /// `r̃ + γ·(1 − terminal)·min_target(s', π(s'))` per row, with the mean action of
    /// `policy` at `s'`. Only target networks are read.
    pub fn bellman_targets(
        &self,
        policy: &GaussianPolicy,
        rewards: &[f64],
        next_states: ArrayView2<'_, f64>,
        terminal: &[bool],
        gamma: f64,
    ) -> Result<Vec<f64>> {
        let n = next_states.nrows();
        if rewards.len() != n || terminal.len() != n {
            return Err(Error::config("reward, terminal and state rows differ"));
        }
        let next_actions = policy.act_batch(next_states)?;
        let sa = ndarray::concatenate(ndarray::Axis(1), &[next_states, next_actions.view()])
            .expect("row counts match")
            .as_standard_layout()
            .into_owned();
        let bootstrap = self.target_min(sa.view())?;
        Ok((0..n)
            .map(|i| {
                let cont = if terminal[i] { 0.0 } else { 1.0 };
                rewards[i] + gamma * cont * bootstrap[i]
            })
            .collect())
    }

    /// Mean squared Bellman error, summed over both critics.
    pub fn loss_and_grads(&self, state_actions: ArrayView2<'_, f64>, targets: &[f64]) -> Result<CriticLoss> {
        let n = state_actions.nrows();
        if targets.len() != n || n == 0 {
            return Err(Error::config("critic loss needs one target per non-empty row"));
        }
        let one = |net: &MlpModel| -> Result<(f64, Gradients)> {
            let trace = net.forward_trace(state_actions)?;
            let mut loss = 0.0;
            let grad = Array2::from_shape_fn((n, 1), |(i, _)| {
                let err = trace.output[[i, 0]] - targets[i];
                loss += err * err;
                2.0 * err / n as f64
            });
            let (g, _) = net.backward(&trace, grad.view())?;
            Ok((loss / n as f64, g))
        };
        let (l1, g1) = one(&self.q1)?;
        if self.single_critic {
            return Ok(CriticLoss {
                loss: l1,
                q1: g1,
                q2: None,
            });
        }
        let (l2, g2) = one(&self.q2)?;
        Ok(CriticLoss {
            loss: l1 + l2,
            q1: g1,
            q2: Some(g2),
        })
    }

    /// `θ_target ← (1 − ρ)θ_target + ρθ` for both critics.
    pub fn update_targets(&mut self) {
        self.q1_target.polyak_update(&self.q1, self.polyak_rho);
        self.q2_target.polyak_update(&self.q2, self.polyak_rho);
    }
}

/// Single-sample Bellman target.
pub fn bellman_target(
    critics: &CriticPair,
    policy: &GaussianPolicy,
    reward: f64,
    s_next: &[f64],
    done: bool,
    gamma: f64,
) -> Result<f64> {
    let next = ArrayView2::from_shape((1, s_next.len()), s_next).expect("row view");
    Ok(critics.bellman_targets(policy, &[reward], next, &[done], gamma)?[0])
}

/// Critic loss on a batch against precomputed targets.
pub fn critic_loss(critics: &CriticPair, batch: &Batch, targets: &[f64]) -> Result<f64> {
    Ok(critics.loss_and_grads(batch.state_actions().view(), targets)?.loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::tensorcore::{grad_check, Dense, ParamSet};
    use ndarray::array;

    fn constant_net(value: f64, input_dim: usize) -> MlpModel {
        MlpModel::from_layers(
            vec![Dense {
                weight: Array2::zeros((1, input_dim)),
                bias: array![value],
            }],
            Activation::Identity,
        )
        .unwrap()
    }

    fn constant_pair(q1: f64, q2: f64) -> CriticPair {
        CriticPair {
            q1: constant_net(q1, 2),
            q2: constant_net(q2, 2),
            q1_target: constant_net(q1, 2),
            q2_target: constant_net(q2, 2),
            polyak_rho: 0.005,
            single_critic: false,
        }
    }

    fn zero_policy() -> GaussianPolicy {
        GaussianPolicy {
            mean_net: MlpModel::from_layers(vec![Dense::zeros(1, 1)], Activation::Tanh).unwrap(),
            log_std: vec![0.0],
            action_bound: 1.0,
        }
    }

    #[test]
    fn target_arithmetic() {
        let c = constant_pair(2.0, 5.0);
        let p = zero_policy();
        assert_eq!(bellman_target(&c, &p, 1.0, &[0.3], false, 0.5).unwrap(), 2.0);
        assert_eq!(bellman_target(&c, &p, 1.0, &[0.3], true, 0.5).unwrap(), 1.0);
        let c = constant_pair(10.0, 10.0);
        let t = bellman_target(&c, &p, 2.19722, &[0.3], false, 0.5).unwrap();
        assert!((t - 7.19722).abs() < 1e-12);
    }

    #[test]
    fn targets_ignore_online_networks() {
        let mut c = constant_pair(2.0, 3.0);
        let p = zero_policy();
        let before = bellman_target(&c, &p, 0.0, &[1.0], false, 0.5).unwrap();
        c.q1 = constant_net(-100.0, 2);
        c.q2 = constant_net(100.0, 2);
        assert_eq!(bellman_target(&c, &p, 0.0, &[1.0], false, 0.5).unwrap(), before);
    }

    #[test]
    fn loss_values() {
        let c = CriticPair {
            single_critic: true,
            ..constant_pair(1.0, 1.0)
        };
        let sa = array![[0.0, 0.0]];
        assert_eq!(c.loss_and_grads(sa.view(), &[3.0]).unwrap().loss, 4.0);
        assert_eq!(c.loss_and_grads(sa.view(), &[1.0]).unwrap().loss, 0.0);
        let twin = constant_pair(1.0, 1.0);
        assert_eq!(twin.loss_and_grads(sa.view(), &[3.0]).unwrap().loss, 8.0);
    }

    #[test]
    fn critic_gradient_check() {
        let mut rng = stream_rng(6, 0);
        let c = CriticPair::new(2, 1, 7, 3, 0.005, false, &mut rng).unwrap();
        let sa = array![[0.1, -0.4, 0.3], [1.2, 0.5, -0.8], [-0.6, 0.9, 0.2]];
        let y = [0.5, -1.0, 2.0];
        let report = grad_check(
            &c.q1,
            |q: &MlpModel| {
                let pair = CriticPair {
                    q1: q.clone(),
                    ..c.clone()
                };
                let l = pair.loss_and_grads(sa.view(), &y).unwrap();
                (l.loss, l.q1)
            },
            1e-4,
        );
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn action_gradient_of_min_critic() {
        let mut rng = stream_rng(7, 0);
        let c = CriticPair::new(2, 2, 8, 3, 0.005, false, &mut rng).unwrap();
        let s = array![[0.4, -0.2], [1.0, 2.0]];
        let a = array![[0.1, 0.3], [-0.5, 0.7]];
        let (_, g) = c.online_min_action_grad(s.view(), a.view()).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..2 {
                let mut ap = a.clone();
                let mut am = a.clone();
                ap[[i, j]] += h;
                am[[i, j]] -= h;
                let f = |acts: &Array2<f64>| {
                    let sa = ndarray::concatenate(ndarray::Axis(1), &[s.view(), acts.view()]).unwrap();
                    c.online_min(sa.view()).unwrap()[i]
                };
                let fd = (f(&ap) - f(&am)) / (2.0 * h);
                assert!((fd - g[[i, j]]).abs() < 1e-6, "{fd} vs {}", g[[i, j]]);
            }
        }
    }

    #[test]
    fn polyak_halves_distance_in_139_updates() {
        let mut rng = stream_rng(8, 0);
        let mut c = CriticPair::new(1, 1, 4, 2, 0.005, false, &mut rng).unwrap();
        c.q1_target = c.q1.clone();
        for v in c.q1_target.param_slices_mut() {
            v.iter_mut().for_each(|x| *x += 1.0);
        }
        let dist = |c: &CriticPair| {
            c.q1.flat_params()
                .iter()
                .zip(c.q1_target.flat_params())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let d0 = dist(&c);
        for _ in 0..139 {
            c.update_targets();
        }
        let d = dist(&c);
        assert!((d / d0 - 0.995f64.powi(139)).abs() < 1e-12);
        assert!(d / d0 < 0.5 && d / d0 > 0.49);
    }
}
