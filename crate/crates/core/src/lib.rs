//! Offline imitation learning from a small expert set plus a large, unlabeled
//! auxiliary set of unknown quality.
//!
//! The pipeline trains a positive-unlabeled discriminator, turns its output
//! into a bounded log-ratio reward, and then trains a Gaussian policy on a
//! combination of behavioral cloning on the expert set, thresholded
//! reward-weighted cloning on the auxiliary set, and a TD-learned critic.
//! Everything runs on small deterministic toy environments so that whole
//! experiment grids fit on a laptop.
//!
//! Modules, bottom-up:
//! - [`tensorcore`]: dense MLPs with hand-written backprop, Adam, and a
//!   finite-difference gradient checker.
//! - [`envs`]: `lineworld1d` and `pointmass2d`, scripted experts, rollouts.
//! - [`data`]: transition sets, expert/auxiliary mixtures, batching, `.tset` files.
//! - [`reward`]: discriminator training and reward estimation.
//! - [`agent`]: policy, critics, objectives and the training loop.
//! - [`harness`]: experiment plans, scoring, IQM, reports and the CLI backend.

pub mod agent;
pub mod data;
pub mod envs;
mod error;
pub mod harness;
pub mod reward;
pub mod rng;
pub mod tensorcore;

pub use error::{Error, Result};
