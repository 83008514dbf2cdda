//! Score aggregation: last-10 final scores and the interquartile mean with a bootstrap CI.

use rand::Rng;

use crate::rng::stream_rng;
use crate::{Error, Result};

/// Number of trailing evaluation points averaged into a final score.
pub const FINAL_WINDOW: usize = 10;
pub const DEFAULT_BOOTSTRAP_REPS: usize = 2000;

/// Mean of the last 10 evaluation points.
pub fn final_score(curve: &[f64]) -> Result<f64> {
    if curve.len() < FINAL_WINDOW {
        return Err(Error::config(format!(
            "final score needs at least {FINAL_WINDOW} evaluation points, got {}",
            curve.len()
        )));
    }
    Ok(curve[curve.len() - FINAL_WINDOW..].iter().sum::<f64>() / FINAL_WINDOW as f64)
}

/// Interquartile mean with a percentile-bootstrap 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Iqm {
    pub iqm: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Sort, drop `⌊n/4⌋` from each end, average the rest.
pub fn interquartile_mean(scores: &[f64]) -> Result<f64> {
    if scores.len() < 4 {
        return Err(Error::config(format!("IQM needs at least 4 scores, got {}", scores.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::config("IQM scores must be finite"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted.len() / 4;
    let kept = &sorted[cut..sorted.len() - cut];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// IQM plus a seeded percentile bootstrap (resampling scores with replacement).
pub fn iqm(scores: &[f64], bootstrap_reps: usize, seed: u64) -> Result<Iqm> {
    let point = interquartile_mean(scores)?;
    if bootstrap_reps == 0 {
        return Err(Error::config("bootstrap needs at least one replicate"));
    }
    let mut rng = stream_rng(seed, 0);
    let n = scores.len();
    let mut resample = vec![0.0; n];
    let mut stats: Vec<f64> = (0..bootstrap_reps)
        .map(|_| {
            for slot in resample.iter_mut() {
                *slot = scores[rng.gen_range(0..n)];
            }
            interquartile_mean(&resample).expect("same length as the input")
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let at = |q: f64| stats[((q * (bootstrap_reps - 1) as f64).round()) as usize];
    Ok(Iqm {
        iqm: point,
        ci_low: at(0.025),
        ci_high: at(0.975),
    })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
