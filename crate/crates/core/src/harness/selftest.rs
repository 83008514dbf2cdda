//! Gradient and scalar oracle suites run by the `selftest` subcommand.

use ndarray::Array2;
use rand::Rng;

use super::stats::{final_score, iqm};
use crate::agent::{combine, objective_parts, CriticPair, GaussianPolicy};
use crate::data::{Batch, Origin, Transition};
use crate::reward::{
    discriminator_loss_and_grad, dice_reward, filter_mask, pu_loss, Discriminator, DiscriminatorObjective,
};
use crate::rng::{derive_seed, stream_rng, Rng as ChaRng};
use crate::tensorcore::{grad_check, softplus, GradSet, MlpModel, ParamSet};

/// Relative-error tolerance of every gradient suite.
pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Samples whose ReLU pre-activations (or twin-critic gap) fall this close to a kink are
/// redrawn. A step of `FD_STEP` on one weight moves a pre-activation by up to
/// `FD_STEP·|input|`, about 3e-5 for the inputs drawn here.
pub const KINK_MARGIN: f64 = 1e-4;
/// Nonzero gradient entries smaller than this (relative to `max(1, |loss|)`) sit under
/// the rounding noise of a central difference at `FD_STEP`, so such samples are redrawn.
pub const RESOLUTION_FLOOR: f64 = 1e-7;

/// Pass count of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: String,
    pub passed: usize,
    pub total: usize,
    /// Largest relative error seen (gradient suites) or absolute error (scalar suite).
    pub max_error: f64,
    pub resampled: usize,
}

impl SuiteResult {
    pub fn ok(&self) -> bool {
        self.passed == self.total
    }
}

impl std::fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<14} {:>3}/{:<3} passed  max error {:.3e}  resampled {}",
            self.name, self.passed, self.total, self.max_error, self.resampled
        )
    }
}

fn kink_free(model: &MlpModel, input: &Array2<f64>) -> bool {
    model
        .forward_trace(input.view())
        .map(|t| t.min_hidden_abs_preactivation() >= KINK_MARGIN)
        .unwrap_or(false)
}

fn uniform_rows(rng: &mut ChaRng, n: usize, d: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(lo..hi)).collect()).collect()
}

/// A batch of `n_e` expert rows then `n_o` auxiliary rows with random contents.
fn random_batch(rng: &mut ChaRng, n_e: usize, n_o: usize, sd: usize, ad: usize, bound: f64) -> Batch {
    let s = uniform_rows(rng, n_e + n_o, sd, -3.0, 3.0);
    let a = uniform_rows(rng, n_e + n_o, ad, -bound, bound);
    let s2 = uniform_rows(rng, n_e + n_o, sd, -3.0, 3.0);
    let transitions: Vec<Transition> = (0..n_e + n_o)
        .map(|i| Transition {
            s: s[i].clone(),
            a: a[i].clone(),
            s_next: s2[i].clone(),
            done: rng.gen_bool(0.2),
            true_reward: rng.gen_range(-2.0..0.0),
        })
        .collect();
    let rows: Vec<(&Transition, Origin)> = transitions
        .iter()
        .enumerate()
        .map(|(i, t)| (t, if i < n_e { Origin::Expert } else { Origin::Auxiliary }))
        .collect();
    Batch::from_transitions(&rows).expect("consistent rows")
}

struct Dims {
    sd: usize,
    ad: usize,
    hidden: usize,
    layers: usize,
    n_e: usize,
    n_o: usize,
}

fn random_dims(rng: &mut ChaRng) -> Dims {
    Dims {
        sd: rng.gen_range(1..=3),
        ad: rng.gen_range(1..=2),
        hidden: rng.gen_range(2..=32),
        layers: rng.gen_range(2..=4),
        n_e: rng.gen_range(1..=4),
        n_o: rng.gen_range(1..=4),
    }
}

/// Relative error of `f` at `params`, or `None` when some gradient entry is too small
/// for central differences to resolve.
fn checked<P, G, F>(params: &P, f: F) -> Option<f64>
where
    P: ParamSet + Clone,
    G: GradSet,
    F: Fn(&P) -> (f64, G),
{
    let (loss, grads) = f(params);
    let floor = RESOLUTION_FLOOR * loss.abs().max(1.0);
    let unresolved = grads
        .grad_slices()
        .iter()
        .flat_map(|s| s.iter())
        .any(|&g| g != 0.0 && g.abs() < floor);
    if unresolved {
        return None;
    }
    Some(grad_check(params, f, GRAD_TOLERANCE).max_relative_error)
}

/// Runs `trial` for `n` models; a trial returns `None` to ask for a redraw (kink or unresolvable gradient) or the
/// relative error it measured.
fn run_suite<F>(name: &str, n: usize, seed: u64, mut trial: F) -> SuiteResult
where
    F: FnMut(&mut ChaRng) -> Option<f64>,
{
    let mut result = SuiteResult {
        name: name.to_string(),
        passed: 0,
        total: n,
        max_error: 0.0,
        resampled: 0,
    };
    let mut rng = stream_rng(derive_seed(seed, name), 0);
    for _ in 0..n {
        let err = loop {
            match trial(&mut rng) {
                Some(e) => break e,
                None => result.resampled += 1,
            }
        };
        if err < GRAD_TOLERANCE {
            result.passed += 1;
        }
        result.max_error = result.max_error.max(err);
    }
    result
}

/// Non-negative PU loss through a random discriminator.
pub fn pu_suite(n: usize, seed: u64) -> SuiteResult {
    run_suite("pu_loss", n, seed, |rng| {
        let d = random_dims(rng);
        let eta = rng.gen_range(0.05..0.95);
        let disc = Discriminator::new(d.sd + d.ad, d.hidden, d.layers, eta, rng).expect("valid dims");
        let batch = random_batch(rng, d.n_e, d.n_o, d.sd, d.ad, 1.0);
        if !kink_free(&disc.net, &batch.state_actions()) {
            return None;
        }
        let f = |m: &MlpModel| {
            discriminator_loss_and_grad(m, &batch, DiscriminatorObjective::PositiveUnlabeled, eta).expect("finite")
        };
        checked(&disc.net, f)
    })
}

/// Thresholded reward-weighted Gaussian NLL.
pub fn weighted_bc_suite(n: usize, seed: u64) -> SuiteResult {
    run_suite("weighted_bc", n, seed, |rng| {
        let d = random_dims(rng);
        let bound = rng.gen_range(0.5..2.0);
        let mut policy = GaussianPolicy::new(d.sd, d.ad, d.hidden, d.layers, bound, rng).expect("valid dims");
        for ls in &mut policy.log_std {
            *ls = rng.gen_range(-1.0..1.0);
        }
        let batch = random_batch(rng, d.n_e, d.n_o, d.sd, d.ad, bound);
        if !kink_free(&policy.mean_net, &batch.states) {
            return None;
        }
        let weights: Vec<f64> = (0..batch.len())
            .map(|_| {
                let r = dice_reward(rng.gen_range(0.1..0.9));
                if filter_mask(r, 1.0) { r } else { 0.0 }
            })
            .collect();
        let f = |p: &GaussianPolicy| {
            p.weighted_nll(batch.states.view(), batch.actions.view(), &weights)
                .expect("matching rows")
        };
        checked(&policy, f)
    })
}

/// Twin-critic Bellman regression against frozen targets; both online nets are checked.
pub fn critic_suite(n: usize, seed: u64) -> SuiteResult {
    run_suite("critic", n, seed, |rng| {
        let d = random_dims(rng);
        let policy = GaussianPolicy::new(d.sd, d.ad, d.hidden, d.layers, 1.0, rng).expect("valid dims");
        let critics = CriticPair::new(d.sd, d.ad, d.hidden, d.layers, 0.005, false, rng).expect("valid dims");
        let batch = random_batch(rng, d.n_e, d.n_o, d.sd, d.ad, 1.0);
        let sa = batch.state_actions();
        if !kink_free(&critics.q1, &sa) || !kink_free(&critics.q2, &sa) {
            return None;
        }
        let rewards: Vec<f64> = (0..batch.len()).map(|_| rng.gen_range(-2.2..2.2)).collect();
        let targets = critics
            .bellman_targets(&policy, &rewards, batch.next_states.view(), &batch.done, 0.5)
            .expect("finite");
        let r1 = checked(&critics.q1, |m: &MlpModel| {
            let c = CriticPair { q1: m.clone(), ..critics.clone() };
            let l = c.loss_and_grads(sa.view(), &targets).expect("finite");
            (l.loss, l.q1)
        })?;
        let r2 = checked(&critics.q2, |m: &MlpModel| {
            let c = CriticPair { q2: m.clone(), ..critics.clone() };
            let l = c.loss_and_grads(sa.view(), &targets).expect("finite");
            (l.loss, l.q2.expect("twin critics"))
        })?;
        Some(r1.max(r2))
    })
}

/// `λ1 + α·λ2 + β·λ3` with α, β held fixed.
pub fn combined_suite(n: usize, seed: u64) -> SuiteResult {
    run_suite("combined", n, seed, |rng| {
        let d = random_dims(rng);
        let mut policy = GaussianPolicy::new(d.sd, d.ad, d.hidden, d.layers, 1.0, rng).expect("valid dims");
        for ls in &mut policy.log_std {
            *ls = rng.gen_range(-1.0..1.0);
        }
        let critics = CriticPair::new(d.sd, d.ad, d.hidden, d.layers, 0.005, false, rng).expect("valid dims");
        let batch = random_batch(rng, d.n_e, d.n_o, d.sd, d.ad, 1.0);
        if !kink_free(&policy.mean_net, &batch.states) {
            return None;
        }
        let actions = policy.act_batch(batch.states.view()).expect("dims");
        let sa = ndarray::concatenate(ndarray::Axis(1), &[batch.states.view(), actions.view()])
            .expect("rows")
            .as_standard_layout()
            .into_owned();
        if !kink_free(&critics.q1, &sa) || !kink_free(&critics.q2, &sa) {
            return None;
        }
        let q1 = critics.q1.forward_batch(sa.view()).expect("dims");
        let q2 = critics.q2.forward_batch(sa.view()).expect("dims");
        if q1.iter().zip(q2.iter()).any(|(a, b)| (a - b).abs() < KINK_MARGIN) {
            return None;
        }
        let rewards: Vec<f64> = (0..batch.len()).map(|_| dice_reward(rng.gen_range(0.1..0.9))).collect();
        let (alpha, beta) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let f = |p: &GaussianPolicy| {
            let parts = objective_parts(p, Some(&critics), &batch, &rewards, 1.0).expect("finite");
            let (terms, grads) = combine(p, &parts, alpha, beta);
            (terms.total, grads)
        };
        checked(&policy, f)
    })
}

/// Closed-form scalar checks recomputed independently of the library formulas.
pub fn scalar_suite() -> SuiteResult {
    let ln = f64::ln;
    let sp = |x: f64| (1.0 + x.exp()).ln();
    let checks: Vec<(f64, f64, f64)> = vec![
        (pu_loss(&[0.9], &[0.1], 0.5).unwrap_or(f64::NAN), 0.35381, 1e-4),
        (
            pu_loss(&[0.9], &[0.1], 0.5).unwrap_or(f64::NAN),
            0.5 * -ln(0.9) + sp(-ln(0.9) - 0.5 * -ln(0.1)),
            1e-9,
        ),
        (pu_loss(&[0.5], &[0.5], 0.5).unwrap_or(f64::NAN), 1.22794, 1e-4),
        (
            pu_loss(&[0.5], &[0.5], 0.5).unwrap_or(f64::NAN),
            0.5 * ln(2.0) + sp(ln(2.0) - 0.5 * ln(2.0)),
            1e-9,
        ),
        (dice_reward(0.9), ln(9.0), 0.0),
        (dice_reward(0.5), 0.0, 0.0),
        (softplus(0.0), ln(2.0), 1e-15),
        (softplus(-1.0459), 0.30113, 1e-4),
        (iqm(&(0..10).map(f64::from).collect::<Vec<_>>(), 200, 0).map(|r| r.iqm).unwrap_or(f64::NAN), 4.5, 0.0),
        (final_score(&(1..=10).map(f64::from).collect::<Vec<_>>()).unwrap_or(f64::NAN), 5.5, 0.0),
        (if filter_mask(1.0, 1.0) { 1.0 } else { 0.0 }, 0.0, 0.0),
    ];
    let mut result = SuiteResult {
        name: "scalar".into(),
        passed: 0,
        total: checks.len(),
        max_error: 0.0,
        resampled: 0,
    };
    for (got, want, tol) in checks {
        let err = (got - want).abs();
        if err <= tol {
            result.passed += 1;
        }
        result.max_error = result.max_error.max(if err.is_nan() { f64::INFINITY } else { err });
    }
    result
}

/// All suites with `n` random models per gradient suite.
pub fn selftest(n: usize, seed: u64) -> Vec<SuiteResult> {
    vec![
        scalar_suite(),
        pu_suite(n, seed),
        weighted_bc_suite(n, seed),
        critic_suite(n, seed),
        combined_suite(n, seed),
    ]
}
