//! Positive-unlabeled discriminator training and the log-ratio reward built on it.
//!
//! The discriminator `d(s, a)` is trained with the expert set as labeled positives and
//! the auxiliary set as unlabeled data, using the non-negative PU risk with the hinge
//! `max(0, ·)` replaced by softplus. Its clipped output is turned into the reward
//! `ln(d / (1 − d))`; expert-set samples always get `d = 0.9`.

use ndarray::{Array2, ArrayView2};

use crate::data::{sample_batch, Batch, Origin, TransitionSet};
use crate::rng::stream_rng;
use crate::tensorcore::{cosine_lr, sigmoid, softplus, Activation, AdamState, MlpModel};
use crate::{Error, Result};

pub const CLIP_LO: f64 = 0.1;
pub const CLIP_HI: f64 = 0.9;
/// Discriminator value assigned to every expert-set sample.
pub const EXPERT_D_VALUE: f64 = 0.9;

/// Scores how expert-like a state-action pair is; input is `[s | a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub net: MlpModel,
    pub clip_lo: f64,
    pub clip_hi: f64,
    /// Positive-class prior used during training.
    pub eta: f64,
}

impl Discriminator {
    /// Fresh network with `n_layers` dense layers of width `hidden` and a sigmoid head.
    pub fn new<R: rand::Rng + ?Sized>(
        input_dim: usize,
        hidden: usize,
        n_layers: usize,
        eta: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n_layers < 1 {
            return Err(Error::config("discriminator needs at least one layer"));
        }
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat_n(hidden, n_layers - 1));
        dims.push(1);
        Ok(Discriminator {
            net: MlpModel::new(&dims, Activation::Sigmoid, rng)?,
            clip_lo: CLIP_LO,
            clip_hi: CLIP_HI,
            eta,
        })
    }

    /// Unclipped output in (0, 1).
    pub fn raw(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        let input: Vec<f64> = s.iter().chain(a).copied().collect();
        Ok(self.net.forward(&input)?[0])
    }

    pub fn raw_batch(&self, state_actions: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self.net.forward_batch(state_actions)?.column(0).to_vec())
    }

    pub fn clip(&self, d: f64) -> f64 {
        d.clamp(self.clip_lo, self.clip_hi)
    }
}

fn check_probabilities(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(format!("{what} batch is empty")));
    }
    if let Some(bad) = values.iter().find(|&&d| !(d > 0.0 && d < 1.0)) {
        return Err(Error::Domain(format!("{what} output {bad} is outside (0, 1)")));
    }
    Ok(())
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len() as f64;
    values.sum::<f64>() / n
}

/// Non-negative PU risk on raw discriminator outputs:
/// `η·E_E[−ln d] + softplus(E_O[−ln(1−d)] − η·E_E[−ln(1−d)])`.
pub fn pu_loss(d_expert: &[f64], d_unlabeled: &[f64], eta: f64) -> Result<f64> {
    check_probabilities(d_expert, "expert")?;
    check_probabilities(d_unlabeled, "unlabeled")?;
    let positive = mean(d_expert.iter().map(|d| -d.ln()));
    let unlabeled_negative = mean(d_unlabeled.iter().map(|d| -(1.0 - d).ln()));
    let positive_as_negative = mean(d_expert.iter().map(|d| -(1.0 - d).ln()));
    Ok(eta * positive + softplus(unlabeled_negative - eta * positive_as_negative))
}

/// Plain cross-entropy that treats every auxiliary sample as a negative.
pub fn binary_classifier_loss(d_expert: &[f64], d_unlabeled: &[f64]) -> Result<f64> {
    check_probabilities(d_expert, "expert")?;
    check_probabilities(d_unlabeled, "unlabeled")?;
    Ok(mean(d_expert.iter().map(|d| -d.ln())) + mean(d_unlabeled.iter().map(|d| -(1.0 - d).ln())))
}

/// Loss and its gradient with respect to the logits of each half.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitLoss {
    pub loss: f64,
    pub grad_expert: Vec<f64>,
    pub grad_unlabeled: Vec<f64>,
}

/// [`pu_loss`] written in terms of logits `z` (with `d = σ(z)`), which stays finite when
/// the sigmoid saturates. Uses `−ln σ(z) = softplus(−z)` and `−ln(1 − σ(z)) = softplus(z)`.
pub fn pu_loss_logits(z_expert: &[f64], z_unlabeled: &[f64], eta: f64) -> LogitLoss {
    let ne = z_expert.len() as f64;
    let no = z_unlabeled.len() as f64;
    let positive = mean(z_expert.iter().map(|&z| softplus(-z)));
    let unlabeled_negative = mean(z_unlabeled.iter().map(|&z| softplus(z)));
    let positive_as_negative = mean(z_expert.iter().map(|&z| softplus(z)));
    let inner = unlabeled_negative - eta * positive_as_negative;
    let gate = sigmoid(inner);
    LogitLoss {
        loss: eta * positive + softplus(inner),
        grad_expert: z_expert
            .iter()
            .map(|&z| -eta * sigmoid(-z) / ne - gate * eta * sigmoid(z) / ne)
            .collect(),
        grad_unlabeled: z_unlabeled.iter().map(|&z| gate * sigmoid(z) / no).collect(),
    }
}

pub fn binary_classifier_loss_logits(z_expert: &[f64], z_unlabeled: &[f64]) -> LogitLoss {
    let ne = z_expert.len() as f64;
    let no = z_unlabeled.len() as f64;
    LogitLoss {
        loss: mean(z_expert.iter().map(|&z| softplus(-z))) + mean(z_unlabeled.iter().map(|&z| softplus(z))),
        grad_expert: z_expert.iter().map(|&z| -sigmoid(-z) / ne).collect(),
        grad_unlabeled: z_unlabeled.iter().map(|&z| sigmoid(z) / no).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscriminatorObjective {
    /// Non-negative PU risk.
    PositiveUnlabeled,
    /// All of D_O treated as negatives, no class prior.
    BinaryClassifier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub eta: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub n_layers: usize,
    pub objective: DiscriminatorObjective,
    pub seed: u64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            eta: 0.5,
            learning_rate: 1e-4,
            steps: 5000,
            batch_size: 256,
            hidden: 128,
            n_layers: 4,
            objective: DiscriminatorObjective::PositiveUnlabeled,
            seed: 0,
        }
    }
}

/// Loss of `objective` on one batch, with gradients already propagated into `net`.
pub(crate) fn discriminator_loss_and_grad(
    net: &MlpModel,
    batch: &Batch,
    objective: DiscriminatorObjective,
    eta: f64,
) -> Result<(f64, crate::tensorcore::Gradients)> {
    let trace = net.forward_trace(batch.state_actions().view())?;
    let logits = trace.logits().column(0).to_vec();
    let (ze, zo) = logits.split_at(batch.n_expert);
    let l = match objective {
        DiscriminatorObjective::PositiveUnlabeled => pu_loss_logits(ze, zo, eta),
        DiscriminatorObjective::BinaryClassifier => binary_classifier_loss_logits(ze, zo),
    };
    let grad: Vec<f64> = l.grad_expert.iter().chain(&l.grad_unlabeled).copied().collect();
    let grad = Array2::from_shape_vec((grad.len(), 1), grad).expect("column vector");
    let (g, _) = net.backward_logits(&trace, grad.view())?;
    Ok((l.loss, g))
}

/// Pretrain a discriminator for a fixed step budget with a cosine-annealed learning rate.
/// Returns the frozen model and the per-step loss curve.
pub fn train_discriminator(
    expert: &TransitionSet,
    auxiliary: &TransitionSet,
    config: &DiscriminatorConfig,
) -> Result<(Discriminator, Vec<f64>)> {
    if expert.env() != auxiliary.env() {
        return Err(Error::config("expert and auxiliary sets come from different environments"));
    }
    if !(0.0..1.0).contains(&config.eta) {
        return Err(Error::config(format!("eta must lie in [0, 1), got {}", config.eta)));
    }
    if config.steps == 0 {
        return Err(Error::config("discriminator needs at least one training step"));
    }
    let env = expert.env();
    let mut init_rng = stream_rng(config.seed, 0);
    let mut batch_rng = stream_rng(config.seed, 1);
    let mut disc = Discriminator::new(
        env.state_dim + env.action_dim,
        config.hidden,
        config.n_layers,
        config.eta,
        &mut init_rng,
    )?;
    let mut adam = AdamState::new(&disc.net, config.learning_rate, 0.0)?;
    let mut curve = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let batch = sample_batch(expert, auxiliary, config.batch_size, &mut batch_rng)?;
        let (loss, grads) = discriminator_loss_and_grad(&disc.net, &batch, config.objective, config.eta)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                step,
                reason: format!("discriminator loss is {loss}"),
                snapshot: format!("dims={:?}", disc.net.dims()),
            });
        }
        curve.push(loss);
        // the schedule hits zero at `steps`; the last update uses a small positive rate
        adam.learning_rate = cosine_lr(config.learning_rate, step, config.steps)?;
        if adam.learning_rate > 0.0 {
            adam.step(&mut disc.net, &grads)?;
        }
    }
    Ok((disc, curve))
}

/// `ln(d / (1 − d))`.
pub fn dice_reward(d: f64) -> f64 {
    (d / (1.0 - d)).ln()
}

/// Frozen discriminator plus the settings that turn it into rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    pub discriminator: Discriminator,
    pub expert_d_value: f64,
    /// Threshold for reward-weighted cloning.
    pub tau: f64,
}

impl RewardModel {
    pub fn new(discriminator: Discriminator, tau: f64) -> Self {
        RewardModel {
            discriminator,
            expert_d_value: EXPERT_D_VALUE,
            tau,
        }
    }

    /// Clipped discriminator value used for a sample of the given origin.
    pub fn clipped_d(&self, s: &[f64], a: &[f64], origin: Origin) -> Result<f64> {
        Ok(match origin {
            Origin::Expert => self.expert_d_value,
            Origin::Auxiliary => self.discriminator.clip(self.discriminator.raw(s, a)?),
        })
    }

    /// Clipped values for every row of a batch.
    pub fn clipped_d_batch(&self, batch: &Batch) -> Result<Vec<f64>> {
        let raw = self.discriminator.raw_batch(batch.state_actions().view())?;
        Ok(raw
            .into_iter()
            .zip(&batch.origin)
            .map(|(d, o)| match o {
                Origin::Expert => self.expert_d_value,
                Origin::Auxiliary => self.discriminator.clip(d),
            })
            .collect())
    }
}

/// Reward of a single sample: `ln(d/(1−d))` on the clipped discriminator output, or on
/// `d = 0.9` for expert-set samples.
pub fn estimate_reward(model: &RewardModel, s: &[f64], a: &[f64], origin: Origin) -> Result<f64> {
    Ok(dice_reward(model.clipped_d(s, a, origin)?))
}

/// 1 iff `reward > tau`.
pub fn filter_mask(reward: f64, tau: f64) -> bool {
    reward > tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{generate_dataset, BehaviorPolicy, EnvSpec};
    use crate::tensorcore::{grad_check, Dense};
    use proptest::prelude::*;

    const LN9: f64 = 2.1972245773362196;

    #[test]
    fn pu_loss_worked_examples() {
        assert!((pu_loss(&[0.9], &[0.1], 0.5).unwrap() - 0.35381).abs() < 1e-4);
        // 0.5·ln2 + softplus(ln2 − 0.5·ln2) evaluates to 1.22794
        assert!((pu_loss(&[0.5], &[0.5], 0.5).unwrap() - 1.22794).abs() < 1e-4);
    }

    #[test]
    fn pu_loss_domain() {
        assert!(matches!(pu_loss(&[1.0], &[0.5], 0.5), Err(Error::Domain(_))));
        assert!(matches!(pu_loss(&[0.5], &[0.0], 0.5), Err(Error::Domain(_))));
        assert!(pu_loss(&[], &[0.5], 0.5).is_err());
    }

    #[test]
    fn logit_form_matches_probability_form() {
        let ze = [0.3, -1.2, 2.0];
        let zo = [-0.5, 0.1];
        let de: Vec<f64> = ze.iter().map(|&z| sigmoid(z)).collect();
        let d_o: Vec<f64> = zo.iter().map(|&z| sigmoid(z)).collect();
        let a = pu_loss(&de, &d_o, 0.4).unwrap();
        let b = pu_loss_logits(&ze, &zo, 0.4).loss;
        assert!((a - b).abs() < 1e-12);
        let a = binary_classifier_loss(&de, &d_o).unwrap();
        let b = binary_classifier_loss_logits(&ze, &zo).loss;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn logit_gradients_match_finite_differences() {
        let ze = vec![0.3, -1.2, 2.0];
        let zo = vec![-0.5, 0.1, 0.7, -2.0];
        let l = pu_loss_logits(&ze, &zo, 0.5);
        let h = 1e-6;
        for i in 0..ze.len() {
            let (mut p, mut m) = (ze.clone(), ze.clone());
            p[i] += h;
            m[i] -= h;
            let fd = (pu_loss_logits(&p, &zo, 0.5).loss - pu_loss_logits(&m, &zo, 0.5).loss) / (2.0 * h);
            assert!((fd - l.grad_expert[i]).abs() < 1e-8);
        }
        for i in 0..zo.len() {
            let (mut p, mut m) = (zo.clone(), zo.clone());
            p[i] += h;
            m[i] -= h;
            let fd = (pu_loss_logits(&ze, &p, 0.5).loss - pu_loss_logits(&ze, &m, 0.5).loss) / (2.0 * h);
            assert!((fd - l.grad_unlabeled[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn pu_gradient_through_network() {
        let spec = EnvSpec::pointmass();
        let e = generate_dataset(&spec, BehaviorPolicy::Expert, 2, 1).unwrap();
        let o = generate_dataset(&spec, BehaviorPolicy::Random, 2, 2).unwrap();
        let batch = sample_batch(&e, &o, 8, &mut stream_rng(3, 0)).unwrap();
        let disc = Discriminator::new(4, 6, 3, 0.5, &mut stream_rng(4, 0)).unwrap();
        let report = grad_check(
            &disc.net,
            |net: &MlpModel| {
                discriminator_loss_and_grad(net, &batch, DiscriminatorObjective::PositiveUnlabeled, 0.5).unwrap()
            },
            1e-4,
        );
        assert!(report.passed, "{report:?}");
    }

    fn constant_discriminator(d: f64) -> Discriminator {
        let z = (d / (1.0 - d)).ln();
        Discriminator {
            net: MlpModel::from_layers(
                vec![Dense {
                    weight: Array2::zeros((1, 2)),
                    bias: ndarray::array![z],
                }],
                Activation::Sigmoid,
            )
            .unwrap(),
            clip_lo: CLIP_LO,
            clip_hi: CLIP_HI,
            eta: 0.5,
        }
    }

    #[test]
    fn reward_values() {
        assert_eq!(dice_reward(0.9), LN9);
        assert_eq!(dice_reward(0.5), 0.0);
        let model = RewardModel::new(constant_discriminator(0.97), 1.0);
        assert_eq!(estimate_reward(&model, &[0.0], &[0.0], Origin::Auxiliary).unwrap(), LN9);
        let model = RewardModel::new(constant_discriminator(0.02), 1.0);
        assert_eq!(estimate_reward(&model, &[0.0], &[0.0], Origin::Expert).unwrap(), LN9);
        let r = estimate_reward(&model, &[0.0], &[0.0], Origin::Auxiliary).unwrap();
        assert!((r + LN9).abs() < 1e-12);
    }

    #[test]
    fn mask_is_strict() {
        assert!(filter_mask(2.0, 1.0));
        assert!(!filter_mask(0.5, 1.0));
        assert!(!filter_mask(1.0, 1.0));
    }

    #[test]
    fn training_is_deterministic() {
        let spec = EnvSpec::lineworld();
        let e = generate_dataset(&spec, BehaviorPolicy::Expert, 3, 1).unwrap();
        let o = generate_dataset(&spec, BehaviorPolicy::Random, 10, 2).unwrap();
        let config = DiscriminatorConfig {
            steps: 50,
            batch_size: 32,
            hidden: 16,
            ..Default::default()
        };
        let a = train_discriminator(&e, &o, &config).unwrap();
        let b = train_discriminator(&e, &o, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.len(), 50);
    }

    proptest! {
        #[test]
        fn pu_loss_dominates_positive_term(
            de in proptest::collection::vec(0.01f64..0.99, 1..8),
            d_o in proptest::collection::vec(0.01f64..0.99, 1..8),
            eta in 0.0f64..1.0,
        ) {
            let loss = pu_loss(&de, &d_o, eta).unwrap();
            let first = eta * de.iter().map(|d| -d.ln()).sum::<f64>() / de.len() as f64;
            prop_assert!(loss >= first);
        }

        #[test]
        fn pu_loss_is_permutation_invariant(
            de in proptest::collection::vec(0.01f64..0.99, 1..8),
            d_o in proptest::collection::vec(0.01f64..0.99, 1..8),
            eta in 0.0f64..1.0,
        ) {
            let mut re = de.clone();
            re.reverse();
            let mut ro = d_o.clone();
            ro.rotate_left(1);
            let a = pu_loss(&de, &d_o, eta).unwrap();
            let b = pu_loss(&re, &ro, eta).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn first_term_is_monotone_in_expert_output(
            de in proptest::collection::vec(0.01f64..0.98, 1..8),
            idx in 0usize..8,
            bump in 0.0f64..0.5,
        ) {
            let first = |v: &[f64]| v.iter().map(|d| -d.ln()).sum::<f64>() / v.len() as f64;
            let i = idx % de.len();
            let mut up = de.clone();
            up[i] = (up[i] + bump).min(0.99);
            prop_assert!(first(&up) <= first(&de));
        }

        #[test]
        fn rewards_are_bounded_and_antisymmetric(raw in 0.0001f64..0.9999) {
            let d = raw.clamp(CLIP_LO, CLIP_HI);
            let r = dice_reward(d);
            prop_assert!(r.abs() <= 2.19723);
            prop_assert!((r + dice_reward(1.0 - d)).abs() < 1e-12);
        }
    }
}
