use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Which policy-learning recipe a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Expert cloning + thresholded reward-weighted cloning + critic term.
    Roida,
    /// Plain behavioral cloning on the expert set only.
    BcExp,
    /// Unweighted behavioral cloning on the union of both sets.
    BcAll,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Roida => "roida",
            Method::BcExp => "bc_exp",
            Method::BcAll => "bc_all",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "roida" => Ok(Method::Roida),
            "bc_exp" => Ok(Method::BcExp),
            "bc_all" => Ok(Method::BcAll),
            other => Err(Error::config(format!(
                "unknown method `{other}` (roida, bc_exp, bc_all)"
            ))),
        }
    }
}

/// How rewards for the cloning weights and the critic are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    /// `ln(d/(1−d))` of the clipped discriminator.
    Dice,
    /// The clipped discriminator output itself, thresholded at 0.5.
    RawDiscriminator,
    /// The environment's true reward, thresholded at the expert-set median.
    GroundTruth,
}

/// Every knob of a training run. Defaults follow the published hyperparameters; the
/// architecture and budget fields are usually shrunk for desk-scale runs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub gamma: f64,
    pub tau_threshold: f64,
    pub eta: f64,
    pub t_freq: usize,
    pub total_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub batch_size: usize,
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub policy_weight_decay: f64,
    pub disc_lr: f64,
    pub disc_steps: usize,
    pub base_alpha: f64,
    pub base_beta: f64,
    pub loss_ratio_damp: f64,
    pub polyak_rho: f64,
    pub policy_hidden: usize,
    pub policy_layers: usize,
    pub critic_hidden: usize,
    pub critic_layers: usize,
    pub disc_hidden: usize,
    pub disc_layers: usize,
    /// Force α = 0.
    pub no_weighted_bc: bool,
    pub raw_discriminator_reward: bool,
    /// Train the discriminator with plain cross-entropy, D_O as negatives.
    pub binary_classifier_discriminator: bool,
    pub gt_rewards: bool,
    /// Force β = 0 (no critic term in the policy objective).
    pub no_td: bool,
    pub single_critic: bool,
    /// Cut the bootstrap on a stored `done` flag. The toy tasks only end by time limit,
    /// so this stays off.
    pub terminal_on_done: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Roida,
            gamma: 0.5,
            tau_threshold: 1.0,
            eta: 0.5,
            t_freq: 3,
            total_steps: 20_000,
            eval_every: 1000,
            eval_episodes: 10,
            batch_size: 256,
            policy_lr: 3e-4,
            critic_lr: 3e-4,
            policy_weight_decay: 0.005,
            disc_lr: 1e-4,
            disc_steps: 5000,
            base_alpha: 0.01,
            base_beta: 0.01,
            loss_ratio_damp: 7.5,
            polyak_rho: 0.005,
            policy_hidden: 256,
            policy_layers: 3,
            critic_hidden: 256,
            critic_layers: 3,
            disc_hidden: 128,
            disc_layers: 4,
            no_weighted_bc: false,
            raw_discriminator_reward: false,
            binary_classifier_discriminator: false,
            gt_rewards: false,
            no_td: false,
            single_critic: false,
            terminal_on_done: false,
            seed: 0,
        }
    }
}

macro_rules! config_keys {
    ($($key:ident),* $(,)?) => {
        impl TrainConfig {
            /// Every overridable key, in canonical order.
            pub const KEYS: &'static [&'static str] = &[$(stringify!($key)),*];

            fn get_string(&self, key: &str) -> Option<String> {
                match key {
                    "method" => Some(self.method.as_str().to_string()),
                    $(stringify!($key) => Some(self.$key.to_string()),)*
                    _ => None,
                }
            }

            fn set_parsed(&mut self, key: &str, value: &str) -> Result<()> {
                let bad = |e: String| Error::config(format!("invalid value `{value}` for `{key}`: {e}"));
                match key {
                    "method" => self.method = value.parse()?,
                    $(stringify!($key) => self.$key = value.parse().map_err(|e| bad(format!("{e}")))?,)*
                    _ => return Err(unknown_key(key)),
                }
                Ok(())
            }
        }
    };
}

config_keys!(
    gamma,
    tau_threshold,
    eta,
    t_freq,
    total_steps,
    eval_every,
    eval_episodes,
    batch_size,
    policy_lr,
    critic_lr,
    policy_weight_decay,
    disc_lr,
    disc_steps,
    base_alpha,
    base_beta,
    loss_ratio_damp,
    polyak_rho,
    policy_hidden,
    policy_layers,
    critic_hidden,
    critic_layers,
    disc_hidden,
    disc_layers,
    no_weighted_bc,
    raw_discriminator_reward,
    binary_classifier_discriminator,
    gt_rewards,
    no_td,
    single_critic,
    terminal_on_done,
    seed,
);

/// Closest known key to `key`, if any is reasonably close.
pub fn suggest_key(key: &str) -> Option<&'static str> {
    std::iter::once("method")
        .chain(TrainConfig::KEYS.iter().copied())
        .map(|k| (strsim::jaro_winkler(key, k), k))
        .filter(|(score, _)| *score > 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, k)| k)
}

fn unknown_key(key: &str) -> Error {
    match suggest_key(key) {
        Some(s) => Error::Usage(format!("unknown config key `{key}`; did you mean `{s}`?")),
        None => Error::Usage(format!("unknown config key `{key}`")),
    }
}

impl TrainConfig {
    /// Set one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_parsed(key.trim(), value.trim())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.get_string(key)
    }

    pub fn apply_overrides(&mut self, overrides: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in overrides {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Parse flat `key=value` text (blank lines and `#` comments ignored) on top of the
    /// defaults.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut config = TrainConfig::default();
        for (k, v) in parse_kv(text)? {
            config.set(&k, &v)?;
        }
        Ok(config)
    }

    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        for key in std::iter::once("method").chain(Self::KEYS.iter().copied()) {
            out.push_str(&format!("{key}={}\n", self.get_string(key).expect("known key")));
        }
        out
    }

    pub fn reward_mode(&self) -> RewardMode {
        if self.gt_rewards {
            RewardMode::GroundTruth
        } else if self.raw_discriminator_reward {
            RewardMode::RawDiscriminator
        } else {
            RewardMode::Dice
        }
    }

    /// Whether the run trains critics at all.
    pub fn uses_critic(&self) -> bool {
        self.method == Method::Roida && !self.no_td
    }

    /// Whether the run needs a learned discriminator.
    pub fn uses_discriminator(&self) -> bool {
        self.method == Method::Roida && !self.gt_rewards
    }

    pub fn validate(&self) -> Result<()> {
        if self.gt_rewards && (self.raw_discriminator_reward || self.binary_classifier_discriminator) {
            return Err(Error::Usage(
                "gt_rewards cannot be combined with a discriminator-based ablation".into(),
            ));
        }
        if self.method != Method::Roida
            && (self.no_weighted_bc
                || self.raw_discriminator_reward
                || self.binary_classifier_discriminator
                || self.gt_rewards
                || self.no_td)
        {
            return Err(Error::Usage(format!(
                "ablation flags only apply to roida, not {}",
                self.method.as_str()
            )));
        }
        let checks: [(bool, &str); 14] = [
            ((0.0..=1.0).contains(&self.gamma), "gamma must lie in [0, 1]"),
            (self.t_freq >= 1, "t_freq must be at least 1"),
            (self.total_steps >= 1, "total_steps must be positive"),
            (self.eval_every >= 1, "eval_every must be positive"),
            (self.eval_episodes >= 1, "eval_episodes must be positive"),
            (self.batch_size >= 2 && self.batch_size.is_multiple_of(2), "batch_size must be even and at least 2"),
            ((0.0..1.0).contains(&self.eta), "eta must lie in [0, 1)"),
            (self.policy_lr > 0.0 && self.critic_lr > 0.0 && self.disc_lr > 0.0, "learning rates must be positive"),
            (self.policy_weight_decay >= 0.0, "policy_weight_decay must be non-negative"),
            ((0.0..=1.0).contains(&self.polyak_rho), "polyak_rho must lie in [0, 1]"),
            (self.loss_ratio_damp > 0.0, "loss_ratio_damp must be positive"),
            (self.policy_hidden > 0 && self.critic_hidden > 0 && self.disc_hidden > 0, "hidden widths must be positive"),
            (self.policy_layers >= 1 && self.critic_layers >= 1 && self.disc_layers >= 1, "layer counts must be positive"),
            (self.disc_steps >= 1, "disc_steps must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::config(msg));
            }
        }
        Ok(())
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_kv_text())
    }
}

/// Flat `key=value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let line = raw.split('#').next().unwrap_or("").trim();
        if !line.is_empty() {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                offset,
                message: format!("expected key=value, found `{line}`"),
            })?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        offset += raw.len();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_published_values() {
        let c = TrainConfig::default();
        assert_eq!((c.gamma, c.tau_threshold, c.eta, c.t_freq), (0.5, 1.0, 0.5, 3));
        assert_eq!((c.policy_lr, c.critic_lr, c.policy_weight_decay), (3e-4, 3e-4, 0.005));
        assert_eq!((c.base_alpha, c.base_beta, c.loss_ratio_damp), (0.01, 0.01, 7.5));
        assert_eq!((c.disc_lr, c.disc_hidden, c.disc_layers), (1e-4, 128, 4));
        assert_eq!((c.policy_hidden, c.policy_layers, c.critic_hidden), (256, 3, 256));
        c.validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let mut c = TrainConfig::default();
        c.set("gamma", "0.25").unwrap();
        c.set("method", "bc_all").unwrap();
        c.set("single_critic", "true").unwrap();
        let back = TrainConfig::from_kv_text(&c.to_kv_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_suggests() {
        let err = TrainConfig::default().set("gama", "0.1").unwrap_err();
        assert!(err.to_string().contains("`gamma`"), "{err}");
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn contradictory_flags_are_usage_errors() {
        let c = TrainConfig {
            gt_rewards: true,
            raw_discriminator_reward: true,
            ..TrainConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Usage(_))));
    }

    #[test]
    fn range_checks() {
        let c = TrainConfig {
            gamma: 1.5,
            ..TrainConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = TrainConfig {
            t_freq: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn kv_parse_reports_offsets() {
        let err = parse_kv("gamma=0.5\n# note\nbroken line\n").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 17, .. }), "{err:?}");
    }
}
