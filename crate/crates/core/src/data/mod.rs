//! Transition storage, expert/auxiliary mixtures, batching and the `.tset` file format.

mod batch;
mod io;
mod mixture;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::envs::{EnvSpec, ScoreAnchors};
use crate::{Error, Result};

pub use batch::{sample_batch, Batch, Origin};
pub use io::{load_dataset, save_dataset, TSET_EXTENSION};
pub use mixture::{build_mixture, MixtureSetting};

/// One `(s, a, s', done)` sample. `true_reward` is only read in ground-truth reward mode
/// and by evaluation tooling; NaN means it was not recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s_next: Vec<f64>,
    pub done: bool,
    pub true_reward: f64,
}

/// Where a trajectory came from. Diagnostic ground truth only; training never reads it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ExpertSet,
    AuxExpert,
    AuxSuboptimal,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::ExpertSet => "expert_set",
            Provenance::AuxExpert => "aux_expert",
            Provenance::AuxSuboptimal => "aux_suboptimal",
        }
    }
}

/// Environment, score anchors and the seeds that produced a set.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub env: EnvSpec,
    pub anchors: ScoreAnchors,
    pub seeds: Vec<u64>,
}

impl Manifest {
    pub fn new(env: EnvSpec, anchors: ScoreAnchors, seeds: Vec<u64>) -> Self {
        Manifest { env, anchors, seeds }
    }
}

/// Ordered transitions grouped into trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSet {
    transitions: Vec<Transition>,
    /// `trajectory_offsets[i]..trajectory_offsets[i + 1]` is trajectory `i`; starts at 0
    /// and ends at `transitions.len()`.
    trajectory_offsets: Vec<usize>,
    provenance: Vec<Provenance>,
    manifest: Manifest,
}

impl TransitionSet {
    pub fn new(
        transitions: Vec<Transition>,
        trajectory_offsets: Vec<usize>,
        provenance: Vec<Provenance>,
        manifest: Manifest,
    ) -> Result<Self> {
        if trajectory_offsets.first() != Some(&0) {
            return Err(Error::Integrity("trajectory offsets must start at 0".into()));
        }
        if trajectory_offsets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Integrity("trajectory offsets must be strictly increasing".into()));
        }
        if *trajectory_offsets.last().expect("non-empty") != transitions.len() {
            return Err(Error::Integrity(format!(
                "last trajectory offset {} differs from transition count {}",
                trajectory_offsets.last().expect("non-empty"),
                transitions.len()
            )));
        }
        if provenance.len() + 1 != trajectory_offsets.len() {
            return Err(Error::Integrity(format!(
                "{} provenance labels for {} trajectories",
                provenance.len(),
                trajectory_offsets.len() - 1
            )));
        }
        let env = manifest.env;
        for (i, t) in transitions.iter().enumerate() {
            if t.s.len() != env.state_dim || t.s_next.len() != env.state_dim || t.a.len() != env.action_dim {
                return Err(Error::Integrity(format!(
                    "transition {i} has dims s={} a={} s'={}, manifest says state {} action {}",
                    t.s.len(),
                    t.a.len(),
                    t.s_next.len(),
                    env.state_dim,
                    env.action_dim
                )));
            }
            let finite = t
                .s
                .iter()
                .chain(&t.a)
                .chain(&t.s_next)
                .all(|v| v.is_finite());
            // NaN marks an unrecorded reward; infinities are never valid
            if !finite || t.true_reward.is_infinite() {
                return Err(Error::Integrity(format!("transition {i} has a non-finite field")));
            }
        }
        Ok(TransitionSet {
            transitions,
            trajectory_offsets,
            provenance,
            manifest,
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn trajectory_offsets(&self) -> &[usize] {
        &self.trajectory_offsets
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn env(&self) -> &EnvSpec {
        &self.manifest.env
    }

    pub fn n_trajectories(&self) -> usize {
        self.provenance.len()
    }

    pub fn trajectory(&self, i: usize) -> &[Transition] {
        &self.transitions[self.trajectory_offsets[i]..self.trajectory_offsets[i + 1]]
    }

    /// New set made of the listed trajectories in the given order, each tagged with the
    /// paired provenance label.
    pub fn select(&self, picks: &[(usize, Provenance)], seeds: Vec<u64>) -> Result<TransitionSet> {
        let mut transitions = Vec::new();
        let mut offsets = vec![0];
        let mut provenance = Vec::with_capacity(picks.len());
        for &(i, label) in picks {
            if i >= self.n_trajectories() {
                return Err(Error::config(format!("trajectory {i} out of range")));
            }
            transitions.extend_from_slice(self.trajectory(i));
            offsets.push(transitions.len());
            provenance.push(label);
        }
        let manifest = Manifest::new(self.manifest.env, self.manifest.anchors, seeds);
        TransitionSet::new(transitions, offsets, provenance, manifest)
    }

    /// Concatenate trajectories from sets sharing one environment.
    pub fn concat(parts: &[&TransitionSet], seeds: Vec<u64>) -> Result<TransitionSet> {
        let first = parts.first().ok_or_else(|| Error::config("nothing to concatenate"))?;
        let mut transitions = Vec::new();
        let mut offsets = vec![0];
        let mut provenance = Vec::new();
        for part in parts {
            if part.manifest.env != first.manifest.env {
                return Err(Error::config("cannot concatenate sets from different environments"));
            }
            for i in 0..part.n_trajectories() {
                transitions.extend_from_slice(part.trajectory(i));
                offsets.push(transitions.len());
                provenance.push(part.provenance[i]);
            }
        }
        TransitionSet::new(
            transitions,
            offsets,
            provenance,
            Manifest::new(first.manifest.env, first.manifest.anchors, seeds),
        )
    }

    /// Same transitions with every provenance label overwritten.
    pub fn with_uniform_provenance(&self, label: Provenance) -> TransitionSet {
        TransitionSet {
            provenance: vec![label; self.provenance.len()],
            ..self.clone()
        }
    }

    /// Copy with every `true_reward` marked unrecorded (NaN).
    pub fn without_true_rewards(&self) -> TransitionSet {
        let mut out = self.clone();
        for t in &mut out.transitions {
            t.true_reward = f64::NAN;
        }
        out
    }

    /// Whether every transition carries a recorded true reward.
    pub fn has_true_rewards(&self) -> bool {
        self.transitions.iter().all(|t| t.true_reward.is_finite())
    }

    /// Undiscounted true-reward return of every trajectory.
    pub fn trajectory_returns(&self) -> Vec<f64> {
        (0..self.n_trajectories())
            .map(|i| self.trajectory(i).iter().map(|t| t.true_reward).sum())
            .collect()
    }

    pub fn summary(&self) -> DatasetSummary {
        let returns = self.trajectory_returns();
        let count = |p: Provenance| self.provenance.iter().filter(|&&q| q == p).count();
        let mean = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
        DatasetSummary {
            env: self.manifest.env.name.to_string(),
            transitions: self.len(),
            trajectories: self.n_trajectories(),
            expert_set: count(Provenance::ExpertSet),
            aux_expert: count(Provenance::AuxExpert),
            aux_suboptimal: count(Provenance::AuxSuboptimal),
            mean_return: mean,
            min_return: returns.iter().copied().fold(f64::INFINITY, f64::min),
            max_return: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            anchors: self.manifest.anchors,
        }
    }
}

/// Counts, returns and provenance composition of a set, as printed by `roida stats`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub env: String,
    pub transitions: usize,
    pub trajectories: usize,
    pub expert_set: usize,
    pub aux_expert: usize,
    pub aux_suboptimal: usize,
    pub mean_return: f64,
    pub min_return: f64,
    pub max_return: f64,
    pub anchors: ScoreAnchors,
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "env:              {}", self.env)?;
        writeln!(f, "transitions:      {}", self.transitions)?;
        writeln!(f, "trajectories:     {}", self.trajectories)?;
        writeln!(f, "  expert_set:     {}", self.expert_set)?;
        writeln!(f, "  aux_expert:     {}", self.aux_expert)?;
        writeln!(f, "  aux_suboptimal: {}", self.aux_suboptimal)?;
        writeln!(
            f,
            "return mean/min/max: {:.3} / {:.3} / {:.3}",
            self.mean_return, self.min_return, self.max_return
        )?;
        write!(
            f,
            "anchors expert/random: {:.3} / {:.3}",
            self.anchors.expert_return, self.anchors.random_return
        )
    }
}
