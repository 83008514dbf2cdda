//! Deterministic toy control tasks whose true reward is minus the distance to the origin.
//!
//! - `lineworld1d`: x ∈ [−10, 10], starts with 2 ≤ |x| ≤ 10, horizon 30.
//! - `pointmass2d`: p ∈ [−5, 5]², starts on the annulus 2 ≤ ‖p‖ ≤ 5, horizon 50.
//!
//! Actions are clamped to [−1, 1] per component and added to the position.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Manifest, Provenance, Transition, TransitionSet};
use crate::rng::{derive_seed, stream_rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvName {
    #[serde(rename = "lineworld1d")]
    LineWorld1d,
    #[serde(rename = "pointmass2d")]
    PointMass2d,
}

impl EnvName {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::LineWorld1d => "lineworld1d",
            EnvName::PointMass2d => "pointmass2d",
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lineworld1d" => Ok(EnvName::LineWorld1d),
            "pointmass2d" => Ok(EnvName::PointMass2d),
            other => Err(Error::config(format!(
                "unknown environment `{other}` (expected lineworld1d or pointmass2d)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: EnvName,
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub action_bound: f64,
    pub state_bound: f64,
}

impl EnvSpec {
    pub fn new(name: EnvName) -> Self {
        match name {
            EnvName::LineWorld1d => EnvSpec {
                name,
                state_dim: 1,
                action_dim: 1,
                horizon: 30,
                action_bound: 1.0,
                state_bound: 10.0,
            },
            EnvName::PointMass2d => EnvSpec {
                name,
                state_dim: 2,
                action_dim: 2,
                horizon: 50,
                action_bound: 1.0,
                state_bound: 5.0,
            },
        }
    }

    pub fn lineworld() -> Self {
        Self::new(EnvName::LineWorld1d)
    }

    pub fn pointmass() -> Self {
        Self::new(EnvName::PointMass2d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub position: Vec<f64>,
    pub step_index: usize,
}

/// Undiscounted returns of the expert and of the uniform-random policy, used to
/// put episode returns on a 0–100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreAnchors {
    pub expert_return: f64,
    pub random_return: f64,
}

/// Episodes averaged per anchor.
pub const ANCHOR_EPISODES: usize = 1000;
const ANCHOR_SEED: u64 = 0x5eed_a11c;

impl ScoreAnchors {
    /// Anchors for `spec`, computed once per process from a fixed seed.
    pub fn for_env(spec: &EnvSpec) -> ScoreAnchors {
        static LINE: OnceLock<ScoreAnchors> = OnceLock::new();
        static POINT: OnceLock<ScoreAnchors> = OnceLock::new();
        let cell = match spec.name {
            EnvName::LineWorld1d => &LINE,
            EnvName::PointMass2d => &POINT,
        };
        *cell.get_or_init(|| Self::compute(spec, ANCHOR_EPISODES, ANCHOR_SEED))
    }

    pub fn compute(spec: &EnvSpec, episodes: usize, seed: u64) -> ScoreAnchors {
        let mean = |policy: BehaviorPolicy| {
            let mut rng = stream_rng(seed, 1);
            let total: f64 = (0..episodes)
                .map(|i| {
                    let init = derive_seed(seed, &format!("anchor/{i}"));
                    rollout(spec, init, |s| behavior_action(spec, policy, s, &mut rng))
                        .expect("rollout of a fresh episode")
                })
                .sum();
            total / episodes as f64
        };
        ScoreAnchors {
            expert_return: mean(BehaviorPolicy::Expert),
            random_return: mean(BehaviorPolicy::Random),
        }
    }
}

/// Initial state; deterministic in `rng_seed`.
pub fn env_reset(spec: &EnvSpec, rng_seed: u64) -> EnvState {
    let mut rng = stream_rng(rng_seed, 0);
    let position = match spec.name {
        EnvName::LineWorld1d => {
            let magnitude = rng.gen_range(2.0..=10.0);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            vec![sign * magnitude]
        }
        EnvName::PointMass2d => {
            // uniform over the annulus area
            let radius = rng.gen_range(4.0f64..=25.0).sqrt();
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            vec![radius * angle.cos(), radius * angle.sin()]
        }
    };
    EnvState {
        position,
        step_index: 0,
    }
}

/// Advance one step. Returns the next state, the true reward `−‖s'‖` and whether the
/// horizon was reached.
pub fn env_step(spec: &EnvSpec, state: &EnvState, action: &[f64]) -> Result<(EnvState, f64, bool)> {
    if state.step_index >= spec.horizon {
        return Err(Error::Usage(format!(
            "episode already finished at step {} of {}",
            state.step_index, spec.horizon
        )));
    }
    if action.len() != spec.action_dim || state.position.len() != spec.state_dim {
        return Err(Error::config(format!(
            "{} expects {}-dim states and actions, got state {} / action {}",
            spec.name,
            spec.state_dim,
            state.position.len(),
            action.len()
        )));
    }
    let position: Vec<f64> = state
        .position
        .iter()
        .zip(action)
        .map(|(&x, &a)| {
            let a = a.clamp(-spec.action_bound, spec.action_bound);
            (x + a).clamp(-spec.state_bound, spec.state_bound)
        })
        .collect();
    let reward = -norm(&position);
    let step_index = state.step_index + 1;
    Ok((
        EnvState {
            position,
            step_index,
        },
        reward,
        step_index == spec.horizon,
    ))
}

/// Scripted optimal controller: move straight toward the origin at full speed.
pub fn expert_action(spec: &EnvSpec, state: &EnvState) -> Vec<f64> {
    state
        .position
        .iter()
        .map(|&x| (-x).clamp(-spec.action_bound, spec.action_bound))
        .collect()
}

/// Policies used to generate datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BehaviorPolicy {
    Expert,
    /// Uniform on [−1, 1]^action_dim.
    Random,
    /// Random action with probability ε, expert action otherwise.
    EpsilonExpert(f64),
}

impl FromStr for BehaviorPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expert" => Ok(BehaviorPolicy::Expert),
            "random" => Ok(BehaviorPolicy::Random),
            "epsilon_expert" => Ok(BehaviorPolicy::EpsilonExpert(0.3)),
            other => {
                if let Some(eps) = other.strip_prefix("epsilon_expert:") {
                    let eps: f64 = eps
                        .parse()
                        .map_err(|_| Error::config(format!("bad epsilon in `{other}`")))?;
                    if !(0.0..=1.0).contains(&eps) {
                        return Err(Error::config(format!("epsilon {eps} outside [0, 1]")));
                    }
                    Ok(BehaviorPolicy::EpsilonExpert(eps))
                } else {
                    Err(Error::config(format!(
                        "unknown behavior policy `{other}` (expert, random, epsilon_expert[:eps])"
                    )))
                }
            }
        }
    }
}

fn behavior_action<R: Rng + ?Sized>(
    spec: &EnvSpec,
    policy: BehaviorPolicy,
    state: &EnvState,
    rng: &mut R,
) -> Vec<f64> {
    let random = |rng: &mut R| -> Vec<f64> {
        (0..spec.action_dim)
            .map(|_| rng.gen_range(-spec.action_bound..=spec.action_bound))
            .collect()
    };
    match policy {
        BehaviorPolicy::Expert => expert_action(spec, state),
        BehaviorPolicy::Random => random(rng),
        BehaviorPolicy::EpsilonExpert(eps) => {
            if rng.gen_bool(eps) {
                random(rng)
            } else {
                expert_action(spec, state)
            }
        }
    }
}

/// Undiscounted true-reward return of one full episode started from `env_reset(spec, init_seed)`.
pub fn rollout<F>(spec: &EnvSpec, init_seed: u64, mut act: F) -> Result<f64>
where
    F: FnMut(&EnvState) -> Vec<f64>,
{
    let mut state = env_reset(spec, init_seed);
    let mut total = 0.0;
    loop {
        let action = act(&state);
        let (next, reward, done) = env_step(spec, &state, &action)?;
        total += reward;
        state = next;
        if done {
            return Ok(total);
        }
    }
}

/// Roll out `n_trajectories` full episodes of `policy` and record every transition.
pub fn generate_dataset(
    spec: &EnvSpec,
    policy: BehaviorPolicy,
    n_trajectories: usize,
    seed: u64,
) -> Result<TransitionSet> {
    if n_trajectories == 0 {
        return Err(Error::config("n_trajectories must be positive"));
    }
    let provenance = match policy {
        BehaviorPolicy::Expert => Provenance::ExpertSet,
        _ => Provenance::AuxSuboptimal,
    };
    let mut rng = stream_rng(seed, 1);
    let mut transitions = Vec::with_capacity(n_trajectories * spec.horizon);
    let mut offsets = vec![0];
    for i in 0..n_trajectories {
        let mut state = env_reset(spec, derive_seed(seed, &format!("reset/{i}")));
        loop {
            let action = behavior_action(spec, policy, &state, &mut rng);
            let (next, reward, done) = env_step(spec, &state, &action)?;
            transitions.push(Transition {
                s: state.position.clone(),
                a: action,
                s_next: next.position.clone(),
                done,
                true_reward: reward,
            });
            state = next;
            if done {
                break;
            }
        }
        offsets.push(transitions.len());
    }
    let manifest = Manifest::new(*spec, ScoreAnchors::for_env(spec), vec![seed]);
    TransitionSet::new(transitions, offsets, vec![provenance; n_trajectories], manifest)
}

/// `100 · (R − R_random) / (R_expert − R_random)`.
pub fn normalized_score(anchors: &ScoreAnchors, return_: f64) -> Result<f64> {
    let span = anchors.expert_return - anchors.random_return;
    if !(span.is_finite() && span > 0.0) {
        return Err(Error::config(format!(
            "degenerate score anchors: expert {} vs random {}",
            anchors.expert_return, anchors.random_return
        )));
    }
    Ok(100.0 * (return_ - anchors.random_return) / span)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(position: Vec<f64>) -> EnvState {
        EnvState {
            position,
            step_index: 0,
        }
    }

    #[test]
    fn reset_is_deterministic_and_in_support() {
        for spec in [EnvSpec::lineworld(), EnvSpec::pointmass()] {
            assert_eq!(env_reset(&spec, 99), env_reset(&spec, 99));
        }
        let line = EnvSpec::lineworld();
        let point = EnvSpec::pointmass();
        for seed in 0..10_000 {
            let x = env_reset(&line, seed).position[0].abs();
            assert!((2.0..=10.0).contains(&x));
            let r = norm(&env_reset(&point, seed).position);
            assert!((2.0 - 1e-12..=5.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn step_arithmetic() {
        let line = EnvSpec::lineworld();
        let (next, r, done) = env_step(&line, &at(vec![3.0]), &[-1.0]).unwrap();
        assert_eq!((next.position[0], r, done), (2.0, -2.0, false));
        let (next, r, _) = env_step(&line, &at(vec![9.8]), &[1.0]).unwrap();
        assert_eq!((next.position[0], r), (10.0, -10.0));
        let point = EnvSpec::pointmass();
        let (next, r, _) = env_step(&point, &at(vec![0.0, 0.0]), &[0.0, 0.0]).unwrap();
        assert_eq!((next.position.clone(), r), (vec![0.0, 0.0], 0.0));
        // action clamp
        let (next, _, _) = env_step(&line, &at(vec![0.0]), &[5.0]).unwrap();
        assert_eq!(next.position[0], 1.0);
    }

    #[test]
    fn stepping_a_finished_episode_is_usage_error() {
        let line = EnvSpec::lineworld();
        let done = EnvState {
            position: vec![0.0],
            step_index: 30,
        };
        assert!(matches!(env_step(&line, &done, &[0.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn expert_actions() {
        let line = EnvSpec::lineworld();
        assert_eq!(expert_action(&line, &at(vec![0.4])), vec![-0.4]);
        assert_eq!(expert_action(&line, &at(vec![7.0])), vec![-1.0]);
        let point = EnvSpec::pointmass();
        assert_eq!(expert_action(&point, &at(vec![-0.3, 0.6])), vec![0.3, -0.6]);
    }

    #[test]
    fn expert_return_from_five() {
        let line = EnvSpec::lineworld();
        let mut state = at(vec![5.0]);
        let mut total = 0.0;
        loop {
            let a = expert_action(&line, &state);
            let (next, r, done) = env_step(&line, &state, &a).unwrap();
            total += r;
            state = next;
            if done {
                break;
            }
        }
        assert_eq!(total, -10.0);
    }

    #[test]
    fn dataset_counts_and_goal() {
        let line = EnvSpec::lineworld();
        let set = generate_dataset(&line, BehaviorPolicy::Expert, 1, 3).unwrap();
        assert_eq!(set.len(), 30);
        assert!(set.transitions().last().unwrap().s_next[0].abs() <= 1e-6);
        let point = EnvSpec::pointmass();
        let set = generate_dataset(&point, BehaviorPolicy::Random, 5, 3).unwrap();
        assert_eq!(set.len(), 250);
        assert_eq!(set.n_trajectories(), 5);
        assert!(generate_dataset(&point, BehaviorPolicy::Random, 0, 3).is_err());
    }

    #[test]
    fn normalized_score_scale() {
        let anchors = ScoreAnchors {
            expert_return: -10.0,
            random_return: -110.0,
        };
        assert_eq!(normalized_score(&anchors, -10.0).unwrap(), 100.0);
        assert_eq!(normalized_score(&anchors, -110.0).unwrap(), 0.0);
        assert_eq!(normalized_score(&anchors, -60.0).unwrap(), 50.0);
        let flat = ScoreAnchors {
            expert_return: 1.0,
            random_return: 1.0,
        };
        assert!(normalized_score(&flat, 1.0).is_err());
    }

    #[test]
    fn anchors_order() {
        for spec in [EnvSpec::lineworld(), EnvSpec::pointmass()] {
            let a = ScoreAnchors::for_env(&spec);
            assert!(a.expert_return > a.random_return, "{a:?}");
        }
    }

    #[test]
    fn policy_names_parse() {
        assert_eq!("expert".parse::<BehaviorPolicy>().unwrap(), BehaviorPolicy::Expert);
        assert_eq!(
            "epsilon_expert:0.1".parse::<BehaviorPolicy>().unwrap(),
            BehaviorPolicy::EpsilonExpert(0.1)
        );
        assert!("greedy".parse::<BehaviorPolicy>().is_err());
    }
}
