use super::mlp::{GradSet, ParamSet};

/// Central finite-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// Outcome of comparing analytic gradients with central finite differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index of the parameter with the largest error.
    pub worst_index: usize,
    pub n_params: usize,
    pub passed: bool,
}

/// Relative error `|a − f| / max(1e-8, |a| + |f|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Checks `loss_and_grad`'s analytic gradient against central differences with step
/// [`FD_STEP`], one parameter at a time.
pub fn grad_check<P, G, F>(params: &P, loss_and_grad: F, tolerance: f64) -> GradCheckReport
where
    P: ParamSet + Clone,
    G: GradSet,
    F: Fn(&P) -> (f64, G),
{
    let (_, analytic) = loss_and_grad(params);
    let analytic: Vec<f64> = analytic.grad_slices().concat();
    let mut probe = params.clone();
    let shape: Vec<usize> = params.param_slices().iter().map(|s| s.len()).collect();
    assert_eq!(shape.iter().sum::<usize>(), analytic.len(), "gradient does not mirror parameters");

    let mut worst = (0.0_f64, 0usize);
    let mut flat = 0usize;
    for (slice_idx, &len) in shape.iter().enumerate() {
        for i in 0..len {
            let original = probe.param_slices()[slice_idx][i];
            probe.param_slices_mut()[slice_idx][i] = original + FD_STEP;
            let plus = loss_and_grad(&probe).0;
            probe.param_slices_mut()[slice_idx][i] = original - FD_STEP;
            let minus = loss_and_grad(&probe).0;
            probe.param_slices_mut()[slice_idx][i] = original;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let err = relative_error(analytic[flat], numeric);
            if err > worst.0 || err.is_nan() {
                worst = (if err.is_nan() { f64::INFINITY } else { err }, flat);
            }
            flat += 1;
        }
    }
    GradCheckReport {
        max_relative_error: worst.0,
        worst_index: worst.1,
        n_params: flat,
        passed: worst.0 < tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorcore::mlp::{Activation, MlpModel};
    use crate::rng::stream_rng;
    use ndarray::{array, Array2};

    #[test]
    fn linear_model_quadratic_loss_agrees_exactly() {
        let mut rng = stream_rng(11, 0);
        let model = MlpModel::new(&[3, 2], Activation::Identity, &mut rng).unwrap();
        let x = array![[0.3, -1.2, 0.7], [1.0, 0.5, -0.25]];
        let report = grad_check(
            &model,
            |m: &MlpModel| {
                let trace = m.forward_trace(x.view()).unwrap();
                let loss = 0.5 * trace.output.mapv(|v| v * v).sum();
                let (g, _) = m.backward(&trace, trace.output.view()).unwrap();
                (loss, g)
            },
            1e-10,
        );
        assert!(report.passed, "{report:?}");
        assert_eq!(report.n_params, 8);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut rng = stream_rng(12, 0);
        let model = MlpModel::new(&[2, 1], Activation::Identity, &mut rng).unwrap();
        let x = array![[1.0, 2.0]];
        let report = grad_check(
            &model,
            |m: &MlpModel| {
                let trace = m.forward_trace(x.view()).unwrap();
                let loss = trace.output.sum();
                // deliberately doubled
                let (g, _) = m
                    .backward(&trace, Array2::from_elem((1, 1), 2.0).view())
                    .unwrap();
                (loss, g)
            },
            1e-4,
        );
        assert!(!report.passed);
    }
}
