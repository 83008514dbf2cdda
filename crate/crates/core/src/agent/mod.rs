//! Policy, critics, the combined objective and the training loop.

mod config;
mod critic;
mod objective;
mod policy;
mod train;

pub use config::{parse_kv, suggest_key, Method, RewardMode, TrainConfig};
pub use critic::{bellman_target, critic_loss, CriticLoss, CriticPair};
pub use objective::{
    combine, critic_term, dynamic_scaling, objective_parts, policy_objective, ObjectiveParts, ObjectiveTerms,
};
pub use policy::{GaussianPolicy, PolicyGradients, LOG_STD_MAX, LOG_STD_MIN};
pub use train::{
    build_reward_source, critic_step, evaluate, expert_reward_median, log_from_csv, log_to_csv,
    reward_mode_dispatch, train_roida, CriticOptim, LogRow, RewardSource, TrainOutcome, LOG_HEADER,
    RAW_REWARD_TAU,
};
