//! Dense differentiable building blocks: MLPs with explicit backprop, Adam,
//! a cosine learning-rate schedule and a finite-difference gradient checker.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod mlp;

pub use adam::{adam_step, AdamState};
pub use checkpoint::ModelCheckpoint;
pub use gradcheck::{grad_check, relative_error, GradCheckReport, FD_STEP};
pub use mlp::{sigmoid, Activation, Dense, ForwardTrace, GradSet, Gradients, MlpModel, ParamSet};

use crate::{Error, Result};

/// `ln(1 + eˣ)` without overflow for large `x`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Cosine-annealed learning rate, decaying from `base_lr` at step 0 to 0 at `total_steps`.
pub fn cosine_lr(base_lr: f64, step: usize, total_steps: usize) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::config("cosine schedule needs total_steps > 0"));
    }
    if step > total_steps {
        return Err(Error::config(format!(
            "step {step} is past the end of a {total_steps}-step schedule"
        )));
    }
    let progress = step as f64 / total_steps as f64;
    let lr = base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    Ok(lr.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softplus_values() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(100.0) - 100.0).abs() < 1e-9);
        assert!((softplus(-1.0459) - 0.30113).abs() < 1e-4);
        assert!(softplus(-800.0) >= 0.0);
        assert!(softplus(800.0).is_finite());
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(1e-4, 0, 1000).unwrap(), 1e-4);
        assert_eq!(cosine_lr(1e-4, 1000, 1000).unwrap(), 0.0);
        assert!((cosine_lr(1e-4, 500, 1000).unwrap() - 0.5e-4).abs() < 1e-18);
        assert!(cosine_lr(1e-4, 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn cosine_is_non_increasing(total in 1usize..5000, a in 0usize..5000, b in 0usize..5000) {
            let (lo, hi) = (a.min(b).min(total), a.max(b).min(total));
            prop_assert!(cosine_lr(3e-4, hi, total).unwrap() <= cosine_lr(3e-4, lo, total).unwrap());
        }

        #[test]
        fn softplus_matches_naive_form(x in -30.0f64..30.0) {
            prop_assert!((softplus(x) - (1.0 + x.exp()).ln()).abs() < 1e-12);
        }
    }
}
