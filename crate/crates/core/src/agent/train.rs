//! The full training loop: discriminator pretraining, critic steps with Polyak targets,
//! delayed policy steps and periodic evaluation.

use std::fmt::Write as _;

use rand::Rng;

use super::config::{Method, RewardMode, TrainConfig};
use super::critic::CriticPair;
use super::objective::{policy_objective, ObjectiveTerms};
use super::policy::GaussianPolicy;
use crate::data::{sample_batch, Batch, Origin, Transition, TransitionSet};
use crate::envs::{normalized_score, rollout, EnvSpec, ScoreAnchors};
use crate::reward::{
    dice_reward, train_discriminator, Discriminator, DiscriminatorConfig, DiscriminatorObjective, RewardModel,
};
use crate::rng::{derive_seed, stream_rng};
use crate::tensorcore::AdamState;
use crate::{Error, Result};

/// Threshold on the clipped discriminator output when it is used directly as the reward.
pub const RAW_REWARD_TAU: f64 = 0.5;

/// Where r̃ comes from during a run.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardSource {
    /// `ln(d/(1−d))` of the clipped discriminator, expert samples at d = 0.9.
    Dice(RewardModel),
    /// The clipped discriminator output itself.
    Raw(RewardModel),
    /// Recorded environment reward; `tau` is the expert-set median.
    GroundTruth { tau: f64 },
}

impl RewardSource {
    /// Threshold used by the cloning mask.
    pub fn threshold(&self) -> f64 {
        match self {
            RewardSource::Dice(m) => m.tau,
            RewardSource::Raw(_) => RAW_REWARD_TAU,
            RewardSource::GroundTruth { tau } => *tau,
        }
    }

    pub fn mode(&self) -> RewardMode {
        match self {
            RewardSource::Dice(_) => RewardMode::Dice,
            RewardSource::Raw(_) => RewardMode::RawDiscriminator,
            RewardSource::GroundTruth { .. } => RewardMode::GroundTruth,
        }
    }

    /// r̃ for every row of a batch.
    pub fn batch_rewards(&self, batch: &Batch) -> Result<Vec<f64>> {
        match self {
            RewardSource::Dice(m) => Ok(m.clipped_d_batch(batch)?.into_iter().map(dice_reward).collect()),
            RewardSource::Raw(m) => m.clipped_d_batch(batch),
            RewardSource::GroundTruth { .. } => Ok(batch.true_reward.clone()),
        }
    }
}

/// r̃ of a single transition under the active reward mode.
pub fn reward_mode_dispatch(source: &RewardSource, transition: &Transition, origin: Origin) -> Result<f64> {
    match source {
        RewardSource::Dice(m) => Ok(dice_reward(m.clipped_d(&transition.s, &transition.a, origin)?)),
        RewardSource::Raw(m) => m.clipped_d(&transition.s, &transition.a, origin),
        RewardSource::GroundTruth { .. } => {
            if transition.true_reward.is_finite() {
                Ok(transition.true_reward)
            } else {
                Err(Error::config("ground-truth reward mode needs recorded true rewards"))
            }
        }
    }
}

/// Median of the expert set's recorded rewards.
pub fn expert_reward_median(expert: &TransitionSet) -> Result<f64> {
    if !expert.has_true_rewards() {
        return Err(Error::config("ground-truth reward mode needs recorded true rewards"));
    }
    let mut r: Vec<f64> = expert.transitions().iter().map(|t| t.true_reward).collect();
    r.sort_by(f64::total_cmp);
    let n = r.len();
    Ok(if n % 2 == 1 { r[n / 2] } else { 0.5 * (r[n / 2 - 1] + r[n / 2]) })
}

/// One row of the training log, written at every evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub alpha: f64,
    pub beta: f64,
    pub critic_loss: f64,
    pub eval_score: f64,
}

pub const LOG_HEADER: &str = "step,lambda1,lambda2,lambda3,alpha,beta,critic_loss,eval_score";

/// CSV with [`LOG_HEADER`]; floats use the shortest round-trip representation.
pub fn log_to_csv(rows: &[LogRow]) -> String {
    let mut out = format!("{LOG_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.step, r.lambda1, r.lambda2, r.lambda3, r.alpha, r.beta, r.critic_loss, r.eval_score
        )
        .expect("writing to a String");
    }
    out
}

/// Inverse of [`log_to_csv`].
pub fn log_from_csv(text: &str) -> Result<Vec<LogRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        return Err(Error::Parse {
            offset: 0,
            message: "missing training log header".into(),
        });
    }
    let mut offset = LOG_HEADER.len() + 1;
    let mut rows = Vec::new();
    for line in lines {
        let bad = |m: &str| Error::Parse {
            offset,
            message: format!("{m} in `{line}`"),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad("expected 8 fields"));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad("bad number"));
        rows.push(LogRow {
            step: f[0].parse().map_err(|_| bad("bad step"))?,
            lambda1: num(1)?,
            lambda2: num(2)?,
            lambda3: num(3)?,
            alpha: num(4)?,
            beta: num(5)?,
            critic_loss: num(6)?,
            eval_score: num(7)?,
        });
        offset += line.len() + 1;
    }
    Ok(rows)
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: GaussianPolicy,
    pub critics: Option<CriticPair>,
    pub discriminator: Option<Discriminator>,
    pub discriminator_curve: Vec<f64>,
    pub log: Vec<LogRow>,
    pub policy_updates: usize,
}

impl TrainOutcome {
    pub fn eval_curve(&self) -> Vec<f64> {
        self.log.iter().map(|r| r.eval_score).collect()
    }
}

/// Mean normalized score of `episodes` deterministic rollouts. Start states depend only
/// on `(seed, round)`, so different methods are scored on the same episodes.
pub fn evaluate(
    policy: &GaussianPolicy,
    env: &EnvSpec,
    anchors: &ScoreAnchors,
    episodes: usize,
    seed: u64,
    round: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for ep in 0..episodes {
        let mut failure = None;
        let ret = rollout(env, derive_seed(seed, &format!("eval/{round}/{ep}")), |state| {
            policy.act(&state.position).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                vec![0.0; env.action_dim]
            })
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        total += normalized_score(anchors, ret)?;
    }
    Ok(total / episodes as f64)
}

/// Optimizer state for a critic pair.
#[derive(Debug, Clone)]
pub struct CriticOptim {
    q1: AdamState,
    q2: AdamState,
}

impl CriticOptim {
    pub fn new(critics: &CriticPair, learning_rate: f64) -> Result<Self> {
        Ok(CriticOptim {
            q1: AdamState::new(&critics.q1, learning_rate, 0.0)?,
            q2: AdamState::new(&critics.q2, learning_rate, 0.0)?,
        })
    }
}

/// One Adam step on the Bellman regression followed by a Polyak target update.
/// Returns the loss before the step.
pub fn critic_step(
    critics: &mut CriticPair,
    optim: &mut CriticOptim,
    policy: &GaussianPolicy,
    batch: &Batch,
    rewards: &[f64],
    gamma: f64,
    terminal_on_done: bool,
) -> Result<f64> {
    let terminal: Vec<bool> = batch.done.iter().map(|&d| d && terminal_on_done).collect();
    let targets = critics.bellman_targets(policy, rewards, batch.next_states.view(), &terminal, gamma)?;
    let loss = critics.loss_and_grads(batch.state_actions().view(), &targets)?;
    if !loss.loss.is_finite() {
        return Err(Error::Divergence {
            step: optim.q1.step_count() as usize,
            reason: format!("critic loss is {}", loss.loss),
            snapshot: String::new(),
        });
    }
    optim.q1.step(&mut critics.q1, &loss.q1)?;
    if let Some(g2) = &loss.q2 {
        optim.q2.step(&mut critics.q2, g2)?;
    }
    critics.update_targets();
    Ok(loss.loss)
}

/// Uniform draws with replacement from the union of both sets, tagged by origin.
fn sample_union<R: Rng + ?Sized>(
    expert: &TransitionSet,
    auxiliary: &TransitionSet,
    size: usize,
    rng: &mut R,
) -> Result<Batch> {
    let (ne, no) = (expert.len(), auxiliary.len());
    let mut rows: Vec<(&Transition, Origin)> = (0..size)
        .map(|_| {
            let i = rng.gen_range(0..ne + no);
            if i < ne {
                (&expert.transitions()[i], Origin::Expert)
            } else {
                (&auxiliary.transitions()[i - ne], Origin::Auxiliary)
            }
        })
        .collect();
    // Batch keeps expert rows first
    rows.sort_by_key(|(_, o)| *o != Origin::Expert);
    Batch::from_transitions(&rows)
}

fn snapshot(step: usize, terms: Option<&ObjectiveTerms>, critic_loss: f64, policy: &GaussianPolicy) -> String {
    let mut s = format!("step={step} critic_loss={critic_loss:?} log_std={:?}", policy.log_std);
    if let Some(t) = terms {
        write!(
            s,
            " lambda1={:?} lambda2={:?} lambda3={:?} alpha={:?} beta={:?}",
            t.lambda1, t.lambda2, t.lambda3, t.alpha, t.beta
        )
        .expect("writing to a String");
    }
    s
}

/// Build the reward source a config asks for (pretraining the discriminator if needed).
pub fn build_reward_source(
    expert: &TransitionSet,
    auxiliary: &TransitionSet,
    config: &TrainConfig,
) -> Result<Option<(RewardSource, Vec<f64>)>> {
    if config.method != Method::Roida {
        return Ok(None);
    }
    if config.gt_rewards {
        if !auxiliary.has_true_rewards() {
            return Err(Error::config("ground-truth reward mode needs recorded true rewards"));
        }
        let tau = expert_reward_median(expert)?;
        return Ok(Some((RewardSource::GroundTruth { tau }, Vec::new())));
    }
    let disc_config = DiscriminatorConfig {
        eta: config.eta,
        learning_rate: config.disc_lr,
        steps: config.disc_steps,
        batch_size: config.batch_size,
        hidden: config.disc_hidden,
        n_layers: config.disc_layers,
        objective: if config.binary_classifier_discriminator {
            DiscriminatorObjective::BinaryClassifier
        } else {
            DiscriminatorObjective::PositiveUnlabeled
        },
        seed: derive_seed(config.seed, "discriminator"),
    };
    let (disc, curve) = train_discriminator(expert, auxiliary, &disc_config)?;
    let model = RewardModel::new(disc, config.tau_threshold);
    let source = match config.reward_mode() {
        RewardMode::RawDiscriminator => RewardSource::Raw(model),
        _ => RewardSource::Dice(model),
    };
    Ok(Some((source, curve)))
}

/// Train one policy on `(expert, auxiliary)` according to `config`.
///
/// Every method shares the same initial policy and batch stream for a given seed, and is
/// evaluated on the same episodes. `bc_exp` reads only the expert half of each batch;
/// `bc_all` draws its batches uniformly from the union.
pub fn train_roida(
    expert: &TransitionSet,
    auxiliary: &TransitionSet,
    config: &TrainConfig,
    env: &EnvSpec,
) -> Result<TrainOutcome> {
    config.validate()?;
    if expert.env() != env || auxiliary.env() != env {
        return Err(Error::config("datasets were generated for a different environment"));
    }
    let anchors = expert.manifest().anchors;
    let reward = build_reward_source(expert, auxiliary, config)?;
    let (reward, discriminator_curve) = match reward {
        Some((r, c)) => (Some(r), c),
        None => (None, Vec::new()),
    };

    let mut policy_rng = stream_rng(config.seed, 10);
    let mut critic_rng = stream_rng(config.seed, 11);
    let mut batch_rng = stream_rng(config.seed, 12);
    let mut policy = GaussianPolicy::new(
        env.state_dim,
        env.action_dim,
        config.policy_hidden,
        config.policy_layers,
        env.action_bound,
        &mut policy_rng,
    )?;
    let mut policy_optim = AdamState::new(&policy, config.policy_lr, config.policy_weight_decay)?;
    let mut critics = if config.uses_critic() {
        Some(CriticPair::new(
            env.state_dim,
            env.action_dim,
            config.critic_hidden,
            config.critic_layers,
            config.polyak_rho,
            config.single_critic,
            &mut critic_rng,
        )?)
    } else {
        None
    };
    let mut critic_optim = critics
        .as_ref()
        .map(|c| CriticOptim::new(c, config.critic_lr))
        .transpose()?;

    let mut log = Vec::with_capacity(config.total_steps / config.eval_every);
    let mut last_terms: Option<ObjectiveTerms> = None;
    let mut last_critic_loss = 0.0;
    let mut policy_updates = 0;
    for step in 1..=config.total_steps {
        let batch = match config.method {
            Method::BcAll => sample_union(expert, auxiliary, config.batch_size, &mut batch_rng)?,
            _ => sample_batch(expert, auxiliary, config.batch_size, &mut batch_rng)?,
        };
        let rewards = match &reward {
            Some(r) => Some(r.batch_rewards(&batch)?),
            None => None,
        };
        if let (Some(c), Some(opt), Some(r)) = (critics.as_mut(), critic_optim.as_mut(), rewards.as_ref()) {
            last_critic_loss = critic_step(c, opt, &policy, &batch, r, config.gamma, config.terminal_on_done)
                .map_err(|e| match e {
                    Error::Divergence { reason, .. } => Error::Divergence {
                        step,
                        reason,
                        snapshot: snapshot(step, last_terms.as_ref(), f64::NAN, &policy),
                    },
                    other => other,
                })?;
        }
        if step % config.t_freq == 0 {
            let (terms, grads) = match config.method {
                Method::Roida => {
                    let (r, rw) = (reward.as_ref().expect("roida has rewards"), rewards.as_ref().expect("rewards"));
                    policy_objective(&policy, critics.as_ref(), &batch, rw, r.threshold(), config)?
                }
                Method::BcExp => {
                    let e = batch.half(Origin::Expert);
                    let (l, g) = policy.weighted_nll(e.states.view(), e.actions.view(), &vec![1.0; e.len()])?;
                    (bc_terms(l), g)
                }
                Method::BcAll => {
                    let (l, g) =
                        policy.weighted_nll(batch.states.view(), batch.actions.view(), &vec![1.0; batch.len()])?;
                    (bc_terms(l), g)
                }
            };
            if !terms.total.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence {
                    step,
                    reason: format!("policy objective is {}", terms.total),
                    snapshot: snapshot(step, Some(&terms), last_critic_loss, &policy),
                });
            }
            policy_optim.step(&mut policy, &grads)?;
            policy.clamp_log_std();
            policy_updates += 1;
            last_terms = Some(terms);
        }
        if step % config.eval_every == 0 {
            let score = evaluate(&policy, env, &anchors, config.eval_episodes, config.seed, log.len())?;
            let t = last_terms.unwrap_or(bc_terms(0.0));
            log.push(LogRow {
                step,
                lambda1: t.lambda1,
                lambda2: t.lambda2,
                lambda3: t.lambda3,
                alpha: t.alpha,
                beta: t.beta,
                critic_loss: last_critic_loss,
                eval_score: score,
            });
        }
    }
    let discriminator = match reward {
        Some(RewardSource::Dice(m)) | Some(RewardSource::Raw(m)) => Some(m.discriminator),
        _ => None,
    };
    Ok(TrainOutcome {
        policy,
        critics,
        discriminator,
        discriminator_curve,
        log,
        policy_updates,
    })
}

fn bc_terms(lambda1: f64) -> ObjectiveTerms {
    ObjectiveTerms {
        lambda1,
        lambda2: 0.0,
        lambda3: 0.0,
        alpha: 0.0,
        beta: 0.0,
        total: lambda1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_mixture, MixtureSetting, Provenance};
    use crate::envs::{generate_dataset, BehaviorPolicy};

    fn tiny_config(method: Method) -> TrainConfig {
        TrainConfig {
            method,
            total_steps: 60,
            eval_every: 20,
            eval_episodes: 2,
            batch_size: 16,
            disc_steps: 30,
            policy_hidden: 8,
            critic_hidden: 8,
            disc_hidden: 8,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    fn datasets() -> (EnvSpec, TransitionSet, TransitionSet) {
        let env = EnvSpec::pointmass();
        let experts = generate_dataset(&env, BehaviorPolicy::Expert, 6, 1).unwrap();
        let subs = generate_dataset(&env, BehaviorPolicy::Random, 10, 2).unwrap();
        let (de, d_o) = build_mixture(&MixtureSetting::new(2, 2, 6).unwrap(), &experts, &subs, 4).unwrap();
        (env, de, d_o)
    }

    #[test]
    fn dispatch_examples() {
        let mut rng = stream_rng(0, 0);
        let disc = Discriminator::new(3, 4, 2, 0.5, &mut rng).unwrap();
        let model = RewardModel::new(disc, 1.0);
        let t = Transition {
            s: vec![0.5, 0.5],
            a: vec![0.0],
            s_next: vec![0.0, 0.0],
            done: false,
            true_reward: -0.0,
        };
        let r = reward_mode_dispatch(&RewardSource::Dice(model.clone()), &t, Origin::Expert).unwrap();
        assert_eq!(r, 9f64.ln());
        let raw = reward_mode_dispatch(&RewardSource::Raw(model.clone()), &t, Origin::Auxiliary).unwrap();
        let d = model.discriminator.clip(model.discriminator.raw(&t.s, &t.a).unwrap());
        assert_eq!(raw, d);
        let gt = reward_mode_dispatch(&RewardSource::GroundTruth { tau: -1.0 }, &t, Origin::Auxiliary).unwrap();
        assert_eq!(gt, 0.0);
        let missing = Transition {
            true_reward: f64::NAN,
            ..t
        };
        assert!(matches!(
            reward_mode_dispatch(&RewardSource::GroundTruth { tau: -1.0 }, &missing, Origin::Expert),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gt_mode_without_rewards_is_a_config_error() {
        let (env, de, d_o) = datasets();
        let config = TrainConfig {
            gt_rewards: true,
            ..tiny_config(Method::Roida)
        };
        let err = train_roida(&de, &d_o.without_true_rewards(), &config, &env).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn actor_updates_every_t_freq_steps() {
        let (env, de, d_o) = datasets();
        for (steps, t_freq) in [(60, 3), (61, 3), (10, 4), (7, 1)] {
            let config = TrainConfig {
                total_steps: steps,
                t_freq,
                eval_every: 1000,
                ..tiny_config(Method::Roida)
            };
            let out = train_roida(&de, &d_o, &config, &env).unwrap();
            assert_eq!(out.policy_updates, steps / t_freq);
        }
    }

    #[test]
    fn runs_are_bit_identical() {
        let (env, de, d_o) = datasets();
        for method in [Method::Roida, Method::BcExp, Method::BcAll] {
            let config = tiny_config(method);
            let a = train_roida(&de, &d_o, &config, &env).unwrap();
            let b = train_roida(&de, &d_o, &config, &env).unwrap();
            assert_eq!(log_to_csv(&a.log), log_to_csv(&b.log));
            assert_eq!(a.policy, b.policy);
            assert_eq!(a.log.len(), 3);
        }
    }

    #[test]
    fn provenance_never_reaches_training() {
        let (env, de, d_o) = datasets();
        let config = tiny_config(Method::Roida);
        let a = train_roida(&de, &d_o, &config, &env).unwrap();
        let stripped_e = de.with_uniform_provenance(Provenance::AuxSuboptimal);
        let stripped_o = d_o.with_uniform_provenance(Provenance::ExpertSet);
        let b = train_roida(&stripped_e, &stripped_o, &config, &env).unwrap();
        assert_eq!(log_to_csv(&a.log), log_to_csv(&b.log));
        assert_eq!(a.policy, b.policy);
    }

    #[test]
    fn learned_reward_modes_ignore_recorded_rewards() {
        let (env, de, d_o) = datasets();
        let config = tiny_config(Method::Roida);
        let a = train_roida(&de, &d_o, &config, &env).unwrap();
        let b = train_roida(&de.without_true_rewards(), &d_o.without_true_rewards(), &config, &env).unwrap();
        assert_eq!(a.policy, b.policy);
    }

    #[test]
    fn log_csv_round_trip() {
        let (env, de, d_o) = datasets();
        let out = train_roida(&de, &d_o, &tiny_config(Method::Roida), &env).unwrap();
        let text = log_to_csv(&out.log);
        assert_eq!(log_from_csv(&text).unwrap(), out.log);
        assert!(matches!(log_from_csv("step\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn baselines_share_evaluation_episodes() {
        let env = EnvSpec::lineworld();
        let mut rng = stream_rng(0, 0);
        let policy = GaussianPolicy::new(1, 1, 4, 2, 1.0, &mut rng).unwrap();
        let anchors = ScoreAnchors::for_env(&env);
        let a = evaluate(&policy, &env, &anchors, 3, 9, 2).unwrap();
        let b = evaluate(&policy, &env, &anchors, 3, 9, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn expert_median() {
        let (_, de, _) = datasets();
        let m = expert_reward_median(&de).unwrap();
        let below = de.transitions().iter().filter(|t| t.true_reward < m).count();
        assert!(below <= de.len() / 2);
    }
}
