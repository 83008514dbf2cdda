use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use super::{Provenance, TransitionSet};
use crate::rng::stream_rng;
use crate::{Error, Result};

/// An "x / y" setting: x expert trajectories in the expert set, y more hidden among
/// `n_suboptimal_in_o` suboptimal ones in the auxiliary set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MixtureSetting {
    pub n_expert_in_e: usize,
    pub n_expert_in_o: usize,
    pub n_suboptimal_in_o: usize,
}

impl MixtureSetting {
    pub fn new(n_expert_in_e: usize, n_expert_in_o: usize, n_suboptimal_in_o: usize) -> Result<Self> {
        if n_expert_in_e == 0 {
            return Err(Error::config("the expert set needs at least one trajectory"));
        }
        Ok(MixtureSetting {
            n_expert_in_e,
            n_expert_in_o,
            n_suboptimal_in_o,
        })
    }

    /// Parses `x/y` with the given suboptimal count.
    pub fn parse(text: &str, n_suboptimal_in_o: usize) -> Result<Self> {
        let (x, y) = text
            .split_once('/')
            .ok_or_else(|| Error::config(format!("setting `{text}` is not of the form x/y")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::config(format!("setting `{text}` is not of the form x/y")))
        };
        Self::new(parse(x)?, parse(y)?, n_suboptimal_in_o)
    }

    /// `x-y`, usable as a directory name.
    pub fn dir_name(&self) -> String {
        format!("{}-{}", self.n_expert_in_e, self.n_expert_in_o)
    }
}

impl fmt::Display for MixtureSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.n_expert_in_e, self.n_expert_in_o)
    }
}

impl FromStr for MixtureSetting {
    type Err = Error;

    /// `x/y` (no suboptimal data) or `x/y/z`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('/').collect();
        match parts.as_slice() {
            [_, _] => Self::parse(s, 0),
            [x, y, z] => {
                let z = z
                    .trim()
                    .parse()
                    .map_err(|_| Error::config(format!("bad suboptimal count in `{s}`")))?;
                Self::parse(&format!("{x}/{y}"), z)
            }
            _ => Err(Error::config(format!("setting `{s}` is not of the form x/y"))),
        }
    }
}

/// Draw the expert set D_E and the auxiliary set D_O from two pools.
///
/// Trajectories are sampled without replacement; experts placed in D_O never appear
/// in D_E. The expert-pool shuffle depends only on `seed`, so the same seed yields the
/// same D_E whatever `n_expert_in_o` is.
pub fn build_mixture(
    setting: &MixtureSetting,
    expert_pool: &TransitionSet,
    suboptimal_pool: &TransitionSet,
    seed: u64,
) -> Result<(TransitionSet, TransitionSet)> {
    if expert_pool.env() != suboptimal_pool.env() {
        return Err(Error::config("expert and suboptimal pools come from different environments"));
    }
    let experts_needed = setting.n_expert_in_e + setting.n_expert_in_o;
    if expert_pool.n_trajectories() < experts_needed {
        return Err(Error::config(format!(
            "setting {setting} needs {experts_needed} expert trajectories, pool has {}",
            expert_pool.n_trajectories()
        )));
    }
    if suboptimal_pool.n_trajectories() < setting.n_suboptimal_in_o {
        return Err(Error::config(format!(
            "setting needs {} suboptimal trajectories, pool has {}",
            setting.n_suboptimal_in_o,
            suboptimal_pool.n_trajectories()
        )));
    }
    if setting.n_expert_in_o + setting.n_suboptimal_in_o == 0 {
        return Err(Error::config("the auxiliary set would be empty"));
    }

    let mut expert_order: Vec<usize> = (0..expert_pool.n_trajectories()).collect();
    expert_order.shuffle(&mut stream_rng(seed, 0));
    let mut sub_order: Vec<usize> = (0..suboptimal_pool.n_trajectories()).collect();
    sub_order.shuffle(&mut stream_rng(seed, 1));

    let mut seeds = expert_pool.manifest().seeds.clone();
    seeds.extend(&suboptimal_pool.manifest().seeds);
    seeds.push(seed);

    let expert_picks: Vec<(usize, Provenance)> = expert_order[..setting.n_expert_in_e]
        .iter()
        .map(|&i| (i, Provenance::ExpertSet))
        .collect();
    let expert_set = expert_pool.select(&expert_picks, seeds.clone())?;

    // (from_expert_pool, index), interleaved in a seeded random order
    let mut aux: Vec<(bool, usize)> = expert_order[setting.n_expert_in_e..experts_needed]
        .iter()
        .map(|&i| (true, i))
        .chain(sub_order[..setting.n_suboptimal_in_o].iter().map(|&i| (false, i)))
        .collect();
    aux.shuffle(&mut stream_rng(seed, 2));
    let mut transitions = Vec::new();
    let mut offsets = vec![0];
    let mut labels = Vec::with_capacity(aux.len());
    for &(from_expert_pool, i) in &aux {
        let (pool, label) = if from_expert_pool {
            (expert_pool, Provenance::AuxExpert)
        } else {
            (suboptimal_pool, Provenance::AuxSuboptimal)
        };
        transitions.extend_from_slice(pool.trajectory(i));
        offsets.push(transitions.len());
        labels.push(label);
    }
    let aux_set = TransitionSet::new(
        transitions,
        offsets,
        labels,
        super::Manifest::new(*expert_pool.env(), expert_pool.manifest().anchors, seeds),
    )?;
    Ok((expert_set, aux_set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{generate_dataset, BehaviorPolicy, EnvSpec};

    fn pools() -> (TransitionSet, TransitionSet) {
        let spec = EnvSpec::lineworld();
        (
            generate_dataset(&spec, BehaviorPolicy::Expert, 12, 1).unwrap(),
            generate_dataset(&spec, BehaviorPolicy::Random, 20, 2).unwrap(),
        )
    }

    #[test]
    fn counts_for_five_zero() {
        let (e, s) = pools();
        let setting = MixtureSetting::parse("5/0", 20).unwrap();
        let (de, d_o) = build_mixture(&setting, &e, &s, 9).unwrap();
        assert_eq!(de.len(), 150);
        assert_eq!(d_o.n_trajectories(), 20);
        assert!(d_o.provenance().iter().all(|&p| p == Provenance::AuxSuboptimal));
        assert!(de.provenance().iter().all(|&p| p == Provenance::ExpertSet));
    }

    #[test]
    fn aux_experts_are_disjoint_from_expert_set() {
        let (e, s) = pools();
        let setting = MixtureSetting::parse("5/5", 10).unwrap();
        let (de, d_o) = build_mixture(&setting, &e, &s, 4).unwrap();
        let aux_expert: Vec<&[crate::data::Transition]> = (0..d_o.n_trajectories())
            .filter(|&i| d_o.provenance()[i] == Provenance::AuxExpert)
            .map(|i| d_o.trajectory(i))
            .collect();
        assert_eq!(aux_expert.len(), 5);
        for i in 0..de.n_trajectories() {
            assert!(aux_expert.iter().all(|t| *t != de.trajectory(i)));
        }
    }

    #[test]
    fn deterministic_and_expert_set_stable_across_settings() {
        let (e, s) = pools();
        let a = build_mixture(&MixtureSetting::parse("5/3", 10).unwrap(), &e, &s, 4).unwrap();
        let b = build_mixture(&MixtureSetting::parse("5/3", 10).unwrap(), &e, &s, 4).unwrap();
        assert_eq!(a, b);
        let c = build_mixture(&MixtureSetting::parse("5/0", 10).unwrap(), &e, &s, 4).unwrap();
        assert_eq!(a.0, c.0);
    }

    #[test]
    fn insufficient_pool() {
        let (e, s) = pools();
        let setting = MixtureSetting::parse("7/7", 10).unwrap();
        assert!(matches!(build_mixture(&setting, &e, &s, 0), Err(Error::Config(_))));
        assert!(MixtureSetting::parse("0/3", 10).is_err());
        assert!(MixtureSetting::parse("five", 10).is_err());
    }
}
