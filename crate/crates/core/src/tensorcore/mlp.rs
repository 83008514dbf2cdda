use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::{Error, Result};

/// Element-wise activation applied after a dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative at pre-activation `z` whose activated value is `y`.
    /// The ReLU derivative at exactly zero is taken as zero.
    #[inline]
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "identity" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "sigmoid" => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One affine layer; `weight` is `out × in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Multilayer perceptron: ReLU between layers, a configurable output activation last.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Dense>,
    hidden_activation: Activation,
    output_activation: Activation,
}

/// Cached intermediate values of a batched forward pass, consumed by backprop.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input fed into each layer (`inputs[0]` is the network input).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<f64>>,
    /// Final activated output, `batch × out`.
    pub output: Array2<f64>,
}

impl ForwardTrace {
    /// Pre-activation of the final layer (logits for a sigmoid head).
    pub fn logits(&self) -> &Array2<f64> {
        self.pre.last().expect("trace of a non-empty model")
    }

    /// Smallest |z| over all hidden-layer pre-activations: distance to the nearest ReLU kink.
    pub fn min_hidden_abs_preactivation(&self) -> f64 {
        let hidden = &self.pre[..self.pre.len() - 1];
        hidden
            .iter()
            .flat_map(|z| z.iter())
            .fold(f64::INFINITY, |m, &z| m.min(z.abs()))
    }
}

impl MlpModel {
    /// Randomly initialized model over the layer widths `dims` (input first, output last).
    /// Weights and biases are uniform in ±1/√fan_in.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        output_activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config("an MLP needs at least input and output widths"));
        }
        if dims.contains(&0) {
            return Err(Error::config(format!("layer widths must be positive, got {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut dense = Dense::zeros(fan_in, fan_out);
                dense
                    .weight
                    .mapv_inplace(|_| rng.gen_range(-bound..=bound));
                dense.bias.mapv_inplace(|_| rng.gen_range(-bound..=bound));
                dense
            })
            .collect();
        Ok(MlpModel {
            layers,
            hidden_activation: Activation::Relu,
            output_activation,
        })
    }

    /// Model from explicit layers; adjacent layer widths must chain.
    pub fn from_layers(layers: Vec<Dense>, output_activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("an MLP needs at least one layer"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::config(format!(
                    "layer {i}: bias length {} does not match {} outputs",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::config(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i,
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        let layers = layers
            .into_iter()
            .map(|l| Dense {
                weight: l.weight.as_standard_layout().into_owned(),
                bias: l.bias,
            })
            .collect();
        Ok(MlpModel {
            layers,
            hidden_activation: Activation::Relu,
            output_activation,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::out_dim))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::config(format!(
                "model expects {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        let mut x = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation_of(i);
            x = affine(layer, ArrayView1::from(&x[..]))
                .into_iter()
                .map(|z| act.apply(z))
                .collect();
        }
        Ok(x)
    }

    /// Batched forward pass over rows of `input`.
    pub fn forward_batch(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_batch(input)?;
        let mut x = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation_of(i);
            let mut z = x.dot(&layer.weight.t());
            z += &layer.bias;
            z.mapv_inplace(|v| act.apply(v));
            x = z;
        }
        Ok(x)
    }

    /// Batched forward pass that keeps everything backprop needs.
    pub fn forward_trace(&self, input: ArrayView2<'_, f64>) -> Result<ForwardTrace> {
        self.check_batch(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation_of(i);
            let mut z = x.dot(&layer.weight.t());
            z += &layer.bias;
            let y = z.mapv(|v| act.apply(v));
            inputs.push(x);
            pre.push(z);
            x = y;
        }
        Ok(ForwardTrace {
            inputs,
            pre,
            output: x,
        })
    }

    /// Parameter gradients and input gradients, given the upstream gradient on the
    /// activated outputs.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        output_grad: ArrayView2<'_, f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        if output_grad.dim() != trace.output.dim() {
            return Err(Error::config(format!(
                "output gradient has shape {:?}, forward output has {:?}",
                output_grad.dim(),
                trace.output.dim()
            )));
        }
        let act = self.output_activation;
        let last = self.layers.len() - 1;
        let mut delta = output_grad.to_owned();
        ndarray::Zip::from(&mut delta)
            .and(&trace.pre[last])
            .and(&trace.output)
            .for_each(|g, &z, &y| *g *= act.derivative(z, y));
        Ok(self.backprop_from_last_preactivation(trace, delta))
    }

    /// Like [`MlpModel::backward`], but the upstream gradient is taken with respect to the
    /// final pre-activation, bypassing the output activation. Used for losses written
    /// directly in terms of logits.
    pub fn backward_logits(
        &self,
        trace: &ForwardTrace,
        logit_grad: ArrayView2<'_, f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        if logit_grad.dim() != trace.output.dim() {
            return Err(Error::config(format!(
                "logit gradient has shape {:?}, forward output has {:?}",
                logit_grad.dim(),
                trace.output.dim()
            )));
        }
        Ok(self.backprop_from_last_preactivation(trace, logit_grad.to_owned()))
    }

    /// Single-sample convenience wrapper around [`MlpModel::backward`].
    pub fn backward_single(&self, input: &[f64], output_grad: &[f64]) -> Result<Gradients> {
        if input.len() != self.input_dim() || output_grad.len() != self.output_dim() {
            return Err(Error::config("input or output gradient length mismatch"));
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        let g = ArrayView2::from_shape((1, output_grad.len()), output_grad).expect("row view");
        let trace = self.forward_trace(x)?;
        Ok(self.backward(&trace, g)?.0)
    }

    fn backprop_from_last_preactivation(
        &self,
        trace: &ForwardTrace,
        mut delta: Array2<f64>,
    ) -> (Gradients, Array2<f64>) {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut input_grad = None;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            // the product can come back column-major; parameters are kept row-major
            let weight = delta.t().dot(&trace.inputs[i]).as_standard_layout().into_owned();
            let bias = delta.sum_axis(Axis(0));
            grads.push(Dense { weight, bias });
            let upstream = delta.dot(&layer.weight);
            if i == 0 {
                input_grad = Some(upstream);
            } else {
                let act = self.hidden_activation;
                let mut next = upstream;
                ndarray::Zip::from(&mut next)
                    .and(&trace.pre[i - 1])
                    .and(&trace.inputs[i])
                    .for_each(|g, &z, &y| *g *= act.derivative(z, y));
                delta = next;
            }
        }
        grads.reverse();
        (
            Gradients { layers: grads },
            input_grad.expect("at least one layer"),
        )
    }

    /// Polyak averaging: `self ← (1 − rho)·self + rho·online`.
    pub fn polyak_update(&mut self, online: &MlpModel, rho: f64) {
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            t.weight.zip_mut_with(&o.weight, |t, &o| *t = (1.0 - rho) * *t + rho * o);
            t.bias.zip_mut_with(&o.bias, |t, &o| *t = (1.0 - rho) * *t + rho * o);
        }
    }

    fn check_batch(&self, input: ArrayView2<'_, f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(Error::config(format!(
                "model expects {} inputs, got batch with {} columns",
                self.input_dim(),
                input.ncols()
            )));
        }
        Ok(())
    }
}

fn affine(layer: &Dense, x: ArrayView1<'_, f64>) -> Array1<f64> {
    layer.weight.dot(&x) + &layer.bias
}

/// Per-parameter gradient arrays mirroring an [`MlpModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim(), l.out_dim()))
                .collect(),
        }
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(scale, &b.weight);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A collection of flat, contiguous parameter tensors that an optimizer can update.
pub trait ParamSet {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }
}

/// Gradient counterpart of [`ParamSet`]; slices line up one-to-one.
pub trait GradSet {
    fn grad_slices(&self) -> Vec<&[f64]>;
}

fn dense_slices(layers: &[Dense]) -> Vec<&[f64]> {
    layers
        .iter()
        .flat_map(|l| {
            [
                l.weight.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
        .collect()
}

fn dense_slices_mut(layers: &mut [Dense]) -> Vec<&mut [f64]> {
    layers
        .iter_mut()
        .flat_map(|l| {
            [
                l.weight.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("standard layout"),
            ]
        })
        .collect()
}

impl ParamSet for MlpModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        dense_slices(&self.layers)
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        dense_slices_mut(&mut self.layers)
    }
}

impl GradSet for Gradients {
    fn grad_slices(&self) -> Vec<&[f64]> {
        dense_slices(&self.layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use ndarray::array;

    fn scalar_model(w: f64, b: f64, out: Activation) -> MlpModel {
        MlpModel::from_layers(
            vec![Dense {
                weight: array![[w]],
                bias: array![b],
            }],
            out,
        )
        .unwrap()
    }

    #[test]
    fn forward_identity_tanh_sigmoid() {
        assert_eq!(scalar_model(1.0, 0.0, Activation::Identity).forward(&[3.5]).unwrap(), vec![3.5]);
        assert_eq!(scalar_model(0.0, 0.0, Activation::Tanh).forward(&[-7.0]).unwrap(), vec![0.0]);
        assert_eq!(scalar_model(0.0, 0.0, Activation::Sigmoid).forward(&[42.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let m = scalar_model(1.0, 0.0, Activation::Identity);
        assert!(matches!(m.forward(&[1.0, 2.0]), Err(Error::Config(_))));
    }

    #[test]
    fn layers_must_chain() {
        let bad = vec![Dense::zeros(2, 3), Dense::zeros(4, 1)];
        assert!(MlpModel::from_layers(bad, Activation::Identity).is_err());
    }

    #[test]
    fn backward_linear_chain_rule() {
        let m = scalar_model(2.0, 0.0, Activation::Identity);
        let g = m.backward_single(&[3.0], &[1.0]).unwrap();
        assert_eq!(g.layers[0].weight, array![[3.0]]);
        assert_eq!(g.layers[0].bias, array![1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = stream_rng(3, 0);
        let m = MlpModel::new(&[3, 5, 2], Activation::Tanh, &mut rng).unwrap();
        let g = m.backward_single(&[0.1, -0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn batch_and_single_forward_agree() {
        let mut rng = stream_rng(4, 0);
        let m = MlpModel::new(&[2, 8, 8, 1], Activation::Identity, &mut rng).unwrap();
        let x = array![[0.5, -1.0], [2.0, 0.25]];
        let batch = m.forward_batch(x.view()).unwrap();
        for (row, out) in x.rows().into_iter().zip(batch.rows()) {
            let single = m.forward(row.as_slice().unwrap()).unwrap();
            assert!((single[0] - out[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn initialization_is_bounded_by_fan_in() {
        let mut rng = stream_rng(5, 0);
        let m = MlpModel::new(&[16, 4], Activation::Identity, &mut rng).unwrap();
        assert!(m.layers()[0].weight.iter().all(|w| w.abs() <= 0.25));
        assert_eq!(m.dims(), vec![16, 4]);
        assert_eq!(m.param_count(), 68);
    }

    #[test]
    fn polyak_moves_toward_online() {
        let mut target = scalar_model(0.0, 0.0, Activation::Identity);
        let online = scalar_model(1.0, 2.0, Activation::Identity);
        target.polyak_update(&online, 0.25);
        assert_eq!(target.layers()[0].weight[[0, 0]], 0.25);
        assert_eq!(target.layers()[0].bias[0], 0.5);
    }
}
