//! The three-term policy objective: expert cloning (λ1), thresholded reward-weighted
//! cloning on the auxiliary half (λ2) and the critic term (λ3), combined as
//! `λ1 + α·λ2 + β·λ3` with loss-ratio-based α and β.

use super::config::TrainConfig;
use super::critic::CriticPair;
use super::policy::{GaussianPolicy, PolicyGradients};
use crate::data::{Batch, Origin};
use crate::reward::filter_mask;
use crate::Result;

/// Below this magnitude a term is treated as absent and its scale set to zero.
const RATIO_GUARD: f64 = 1e-8;

/// `α = base_alpha·|λ1/λ2|/damp`, `β = base_beta·|λ1/λ3|/damp`, each zeroed when its
/// denominator is (nearly) zero. Treated as constants by the caller.
pub fn dynamic_scaling(lambda1: f64, lambda2: f64, lambda3: f64, config: &TrainConfig) -> (f64, f64) {
    let scale = |base: f64, denom: f64| {
        if denom.abs() < RATIO_GUARD {
            0.0
        } else {
            base * (lambda1.abs() / denom.abs()) / config.loss_ratio_damp
        }
    };
    (scale(config.base_alpha, lambda2), scale(config.base_beta, lambda3))
}

/// Term values and the scales that combined them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub alpha: f64,
    pub beta: f64,
    pub total: f64,
}

/// Each term with its own gradient, before scaling.
#[derive(Debug, Clone)]
pub struct ObjectiveParts {
    pub lambda1: f64,
    pub grad1: PolicyGradients,
    pub lambda2: f64,
    pub grad2: PolicyGradients,
    pub lambda3: f64,
    pub grad3: Option<PolicyGradients>,
}

/// Evaluate λ1, λ2 and (when critics are given) λ3 on a batch.
///
/// `rewards` holds r̃ for every row; only auxiliary rows enter λ2, weighted by
/// `r̃·𝟙[r̃ > tau]`.
pub fn objective_parts(
    policy: &GaussianPolicy,
    critics: Option<&CriticPair>,
    batch: &Batch,
    rewards: &[f64],
    tau: f64,
) -> Result<ObjectiveParts> {
    let expert = batch.half(Origin::Expert);
    let aux = batch.half(Origin::Auxiliary);
    let (lambda1, grad1) = policy.weighted_nll(
        expert.states.view(),
        expert.actions.view(),
        &vec![1.0; expert.len()],
    )?;
    let weights: Vec<f64> = rewards[batch.n_expert..]
        .iter()
        .map(|&r| if filter_mask(r, tau) { r } else { 0.0 })
        .collect();
    let (lambda2, grad2) = policy.weighted_nll(aux.states.view(), aux.actions.view(), &weights)?;
    let (lambda3, grad3) = match critics {
        Some(c) => {
            let (l3, g3) = critic_term(policy, c, batch)?;
            (l3, Some(g3))
        }
        None => (0.0, None),
    };
    Ok(ObjectiveParts {
        lambda1,
        grad1,
        lambda2,
        grad2,
        lambda3,
        grad3,
    })
}

/// `mean over the batch of −min(q1, q2)(s, π(s))` and its policy gradient.
pub fn critic_term(policy: &GaussianPolicy, critics: &CriticPair, batch: &Batch) -> Result<(f64, PolicyGradients)> {
    let actions = policy.act_batch(batch.states.view())?;
    let (q, dq_da) = critics.online_min_action_grad(batch.states.view(), actions.view())?;
    let n = q.len() as f64;
    let value = -q.iter().sum::<f64>() / n;
    let upstream = dq_da * (-1.0 / n);
    let grad = policy.mean_action_backward(batch.states.view(), upstream.view())?;
    Ok((value, grad))
}

/// Combine the parts with fixed scales.
pub fn combine(policy: &GaussianPolicy, parts: &ObjectiveParts, alpha: f64, beta: f64) -> (ObjectiveTerms, PolicyGradients) {
    let mut grad = PolicyGradients::zeros_like(policy);
    grad.add_scaled(&parts.grad1, 1.0);
    if alpha != 0.0 {
        grad.add_scaled(&parts.grad2, alpha);
    }
    if let (Some(g3), true) = (&parts.grad3, beta != 0.0) {
        grad.add_scaled(g3, beta);
    }
    let terms = ObjectiveTerms {
        lambda1: parts.lambda1,
        lambda2: parts.lambda2,
        lambda3: parts.lambda3,
        alpha,
        beta,
        total: parts.lambda1 + alpha * parts.lambda2 + beta * parts.lambda3,
    };
    (terms, grad)
}

/// Full objective with dynamic α/β and the ablation switches of `config` applied.
pub fn policy_objective(
    policy: &GaussianPolicy,
    critics: Option<&CriticPair>,
    batch: &Batch,
    rewards: &[f64],
    tau: f64,
    config: &TrainConfig,
) -> Result<(ObjectiveTerms, PolicyGradients)> {
    let parts = objective_parts(policy, critics, batch, rewards, tau)?;
    let (mut alpha, mut beta) = dynamic_scaling(parts.lambda1, parts.lambda2, parts.lambda3, config);
    if config.no_weighted_bc {
        alpha = 0.0;
    }
    if config.no_td || critics.is_none() {
        beta = 0.0;
    }
    Ok(combine(policy, &parts, alpha, beta))
}
