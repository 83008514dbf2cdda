//! Experiment plans: which settings, methods and seeds to run, parsed from flat
//! `key=value` text.
//!
//! ```text
//! name=robustness
//! env=pointmass2d
//! settings=5/0,5/3,5/5
//! n_suboptimal=200
//! methods=roida,bc_exp,bc_all,no_td
//! method.tau2=roida tau_threshold=2
//! seeds=0,1,2,3,4
//! total_steps=3000
//! ```
//!
//! Any key that is not a plan key is applied to every cell's `TrainConfig`.

use std::collections::BTreeMap;

use crate::agent::{parse_kv, suggest_key, TrainConfig};
use crate::data::MixtureSetting;
use crate::envs::{EnvName, EnvSpec};
use crate::{Error, Result};

/// A named training recipe: a base method plus config overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub label: String,
    pub overrides: BTreeMap<String, String>,
}

impl MethodSpec {
    /// Built-in labels: the three methods and the single-flag ablations.
    pub fn builtin(label: &str) -> Option<MethodSpec> {
        let flag = |method: &str, key: Option<&str>| {
            let mut overrides = BTreeMap::from([("method".to_string(), method.to_string())]);
            if let Some(k) = key {
                overrides.insert(k.to_string(), "true".to_string());
            }
            Some(MethodSpec {
                label: label.to_string(),
                overrides,
            })
        };
        match label {
            "roida" | "bc_exp" | "bc_all" => flag(label, None),
            "no_weighted_bc" | "raw_discriminator_reward" | "binary_classifier_discriminator" | "gt_rewards"
            | "no_td" | "single_critic" => flag("roida", Some(label)),
            _ => None,
        }
    }

    /// `base key=value key=value ...`
    pub fn parse_custom(label: &str, text: &str) -> Result<MethodSpec> {
        let mut words = text.split_whitespace();
        let base = words
            .next()
            .ok_or_else(|| Error::config(format!("method `{label}` has an empty definition")))?;
        let mut spec = MethodSpec::builtin(base)
            .ok_or_else(|| Error::config(format!("method `{label}` builds on unknown method `{base}`")))?;
        spec.label = label.to_string();
        for w in words {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| Error::config(format!("method `{label}`: expected key=value, found `{w}`")))?;
            spec.overrides.insert(k.to_string(), v.to_string());
        }
        Ok(spec)
    }

    /// `base` with the method's overrides applied.
    pub fn config(&self, base: &TrainConfig) -> Result<TrainConfig> {
        let mut c = base.clone();
        c.apply_overrides(&self.overrides)?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub name: String,
    pub env: EnvSpec,
    pub settings: Vec<MixtureSetting>,
    pub methods: Vec<MethodSpec>,
    pub seeds: Vec<u64>,
    /// Expert trajectories generated once per plan; mixtures draw from this pool.
    pub expert_pool: usize,
    /// Suboptimal trajectories placed in every D_O.
    pub n_suboptimal: usize,
    pub suboptimal_policy: String,
    pub data_seed: u64,
    /// Worker threads for independent cells.
    pub jobs: usize,
    pub bootstrap_reps: usize,
    pub overrides: BTreeMap<String, String>,
}

const PLAN_KEYS: &[&str] = &[
    "name",
    "env",
    "settings",
    "methods",
    "seeds",
    "expert_pool",
    "n_suboptimal",
    "suboptimal_policy",
    "data_seed",
    "jobs",
    "bootstrap_reps",
];

impl ExperimentPlan {
    /// Defaults for an environment: the three robustness settings, every built-in method
    /// and five seeds.
    pub fn new(name: &str, env: EnvName) -> ExperimentPlan {
        ExperimentPlan {
            name: name.to_string(),
            env: EnvSpec::new(env),
            settings: ["5/0", "5/3", "5/5"]
                .iter()
                .map(|s| MixtureSetting::parse(s, 1000).expect("valid preset"))
                .collect(),
            methods: [
                "roida",
                "bc_exp",
                "bc_all",
                "no_weighted_bc",
                "raw_discriminator_reward",
                "binary_classifier_discriminator",
            ]
            .iter()
            .map(|m| MethodSpec::builtin(m).expect("builtin"))
            .collect(),
            seeds: (0..5).collect(),
            expert_pool: 20,
            n_suboptimal: 1000,
            suboptimal_policy: "random".into(),
            data_seed: 0,
            jobs: 1,
            bootstrap_reps: super::stats::DEFAULT_BOOTSTRAP_REPS,
            overrides: BTreeMap::new(),
        }
    }

    pub fn parse(text: &str) -> Result<ExperimentPlan> {
        let pairs = parse_kv(text)?;
        let get = |k: &str| pairs.iter().rev().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let env: EnvName = get("env").unwrap_or("pointmass2d").parse()?;
        let mut plan = ExperimentPlan::new(get("name").unwrap_or("plan"), env);
        let num = |k: &str, v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::config(format!("plan key `{k}` expects a non-negative integer, got `{v}`")))
        };
        if let Some(v) = get("n_suboptimal") {
            plan.n_suboptimal = num("n_suboptimal", v)?;
        }
        if let Some(v) = get("expert_pool") {
            plan.expert_pool = num("expert_pool", v)?;
        }
        if let Some(v) = get("data_seed") {
            plan.data_seed = num("data_seed", v)? as u64;
        }
        if let Some(v) = get("jobs") {
            plan.jobs = num("jobs", v)?.max(1);
        }
        if let Some(v) = get("bootstrap_reps") {
            plan.bootstrap_reps = num("bootstrap_reps", v)?;
        }
        if let Some(v) = get("suboptimal_policy") {
            v.parse::<crate::envs::BehaviorPolicy>()?;
            plan.suboptimal_policy = v.to_string();
        }
        if let Some(v) = get("settings") {
            plan.settings = list(v)
                .map(|s| MixtureSetting::parse(s, plan.n_suboptimal))
                .collect::<Result<_>>()?;
        } else {
            for s in &mut plan.settings {
                s.n_suboptimal_in_o = plan.n_suboptimal;
            }
        }
        if let Some(v) = get("seeds") {
            plan.seeds = list(v)
                .map(|s| s.parse().map_err(|_| Error::config(format!("bad seed `{s}`"))))
                .collect::<Result<_>>()?;
        }
        let custom: BTreeMap<&str, &str> = pairs
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("method.").map(|label| (label, v.as_str())))
            .collect();
        if let Some(v) = get("methods") {
            plan.methods = list(v)
                .map(|label| match custom.get(label) {
                    Some(def) => MethodSpec::parse_custom(label, def),
                    None => MethodSpec::builtin(label)
                        .ok_or_else(|| Error::config(format!("unknown method `{label}`; define it with method.{label}=..."))),
                })
                .collect::<Result<_>>()?;
        }
        for (k, v) in &pairs {
            if PLAN_KEYS.contains(&k.as_str()) || k.starts_with("method.") {
                continue;
            }
            if k == "method" || !TrainConfig::KEYS.contains(&k.as_str()) {
                let hint = suggest_key(k).map(|s| format!("; did you mean `{s}`?")).unwrap_or_default();
                return Err(Error::Usage(format!("unknown plan key `{k}`{hint}")));
            }
            plan.overrides.insert(k.clone(), v.clone());
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.settings.is_empty() || self.methods.is_empty() || self.seeds.is_empty() {
            return Err(Error::config("a plan needs at least one setting, method and seed"));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(Error::config(format!("plan name `{}` is not a plain directory name", self.name)));
        }
        let mut labels: Vec<&str> = self.methods.iter().map(|m| m.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("method labels must be unique"));
        }
        for m in &self.methods {
            if m.label.is_empty() || m.label.contains(['/', '\\', ',']) || m.label.starts_with('.') {
                return Err(Error::config(format!("method label `{}` is not a plain directory name", m.label)));
            }
            self.cell_config(m, 0)?.validate()?;
        }
        let max_expert = self
            .settings
            .iter()
            .map(|s| s.n_expert_in_e + s.n_expert_in_o)
            .max()
            .unwrap_or(0);
        if max_expert > self.expert_pool {
            return Err(Error::config(format!(
                "expert_pool {} is smaller than the {max_expert} expert trajectories a setting needs",
                self.expert_pool
            )));
        }
        Ok(())
    }

    /// Training config of one cell.
    pub fn cell_config(&self, method: &MethodSpec, seed: u64) -> Result<TrainConfig> {
        let mut base = TrainConfig::default();
        base.apply_overrides(&self.overrides)?;
        let mut c = method.config(&base)?;
        c.seed = seed;
        Ok(c)
    }

    pub fn n_cells(&self) -> usize {
        self.settings.len() * self.methods.len() * self.seeds.len()
    }

    /// Plan text that parses back to this plan.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let mut out = format!(
            "name={}\nenv={}\nsettings={}\nn_suboptimal={}\nexpert_pool={}\nsuboptimal_policy={}\ndata_seed={}\njobs={}\nbootstrap_reps={}\nseeds={}\nmethods={}\n",
            self.name,
            self.env.name,
            join(self.settings.iter().map(|s| s.to_string()).collect()),
            self.n_suboptimal,
            self.expert_pool,
            self.suboptimal_policy,
            self.data_seed,
            self.jobs,
            self.bootstrap_reps,
            join(self.seeds.iter().map(|s| s.to_string()).collect()),
            join(self.methods.iter().map(|m| m.label.clone()).collect()),
        );
        for m in &self.methods {
            if MethodSpec::builtin(&m.label).as_ref() != Some(m) {
                let base = m.overrides.get("method").map(String::as_str).unwrap_or("roida");
                let rest: Vec<String> = m
                    .overrides
                    .iter()
                    .filter(|(k, _)| k.as_str() != "method")
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect();
                out.push_str(&format!("method.{}={base} {}\n", m.label, rest.join(" ")));
            }
        }
        for (k, v) in &self.overrides {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Method;

    const TEXT: &str = "name=t\nenv=lineworld1d\nsettings=5/0,5/3\nn_suboptimal=40\nmethods=roida,bc_exp,tau2\nmethod.tau2=roida tau_threshold=2\nseeds=1,2\ntotal_steps=300\n";

    #[test]
    fn parses_plan_text() {
        let p = ExperimentPlan::parse(TEXT).unwrap();
        assert_eq!(p.env, EnvSpec::lineworld());
        assert_eq!(p.settings.len(), 2);
        assert_eq!(p.settings[1].n_expert_in_o, 3);
        assert_eq!(p.settings[1].n_suboptimal_in_o, 40);
        assert_eq!(p.n_cells(), 12);
        let c = p.cell_config(&p.methods[2], 2).unwrap();
        assert_eq!((c.tau_threshold, c.total_steps, c.seed), (2.0, 300, 2));
        assert_eq!(p.cell_config(&p.methods[1], 1).unwrap().method, Method::BcExp);
    }

    #[test]
    fn text_round_trip() {
        let p = ExperimentPlan::parse(TEXT).unwrap();
        assert_eq!(ExperimentPlan::parse(&p.to_text()).unwrap(), p);
    }

    #[test]
    fn rejects_bad_plans() {
        assert!(matches!(ExperimentPlan::parse("total_step=3\n"), Err(Error::Usage(m)) if m.contains("total_steps")));
        assert!(ExperimentPlan::parse("methods=nope\n").is_err());
        assert!(ExperimentPlan::parse("seeds=\n").is_err());
        assert!(ExperimentPlan::parse("settings=30/0\n").is_err());
        assert!(ExperimentPlan::parse("methods=bc_exp,x\nmethod.x=bc_exp no_td=true\n").is_err());
    }
}
