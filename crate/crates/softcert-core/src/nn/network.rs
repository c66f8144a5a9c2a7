//! Sequential networks: construction, forward pass, loss, and gradients.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::layer::{Layer, LayerGrad, LayerSpec};
use crate::rng::{rng_for, stream};
use crate::tensor::Tensor;

/// Which parameter tensor of a layer to address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// Parameter gradients for a whole network, aligned with its layer list
/// (`None` for parameter-free layers).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<Option<LayerGrad>>,
}

impl Gradients {
    pub fn zeros_like(network: &Network) -> Self {
        Gradients {
            layers: network.layers.iter().map(Layer::zero_grad).collect(),
        }
    }

    pub fn layer(&self, index: usize) -> Option<&LayerGrad> {
        self.layers[index].as_ref()
    }

    pub(crate) fn layer_mut(&mut self, index: usize) -> Option<&mut LayerGrad> {
        self.layers[index].as_mut()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Gradients) {
        debug_assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                    *x += y;
                }
                for (x, y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                    *x += y;
                }
            }
        }
    }

    /// Multiply every gradient entry by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for g in self.layers.iter_mut().flatten() {
            for x in g.weight.data_mut() {
                *x *= factor;
            }
            for x in g.bias.data_mut() {
                *x *= factor;
            }
        }
    }

    fn shape_matches(&self, network: &Network) -> bool {
        self.layers.len() == network.layers.len()
            && self.layers.iter().zip(&network.layers).all(|(g, l)| match (g, l.weight()) {
                (Some(g), Some(w)) => {
                    g.weight.shape() == w.shape()
                        && g.bias.shape() == l.bias().expect("bias").shape()
                }
                (None, None) => true,
                _ => false,
            })
    }
}

/// An ordered sequence of layers from a fixed input shape to a logit
/// vector of length `num_classes`. Weights are immutable during forward
/// and gradient evaluation; updates require exclusive access.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    num_classes: usize,
}

impl Network {
    /// Compose `specs` starting from `input_shape`, with zeroed parameters.
    pub fn compose(input_shape: &[usize], specs: &[LayerSpec]) -> Result<Network> {
        if input_shape.is_empty() || input_shape.iter().any(|&d| d == 0) {
            return Err(Error::config(format!("invalid input shape {input_shape:?}")));
        }
        if specs.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for spec in specs {
            let layer = Layer::from_spec(spec, &shape)?;
            shape = layer.out_shape();
            layers.push(layer);
        }
        if shape.len() != 1 {
            return Err(Error::config(format!(
                "final layer must produce a logit vector, got shape {shape:?}"
            )));
        }
        Ok(Network {
            input_shape: input_shape.to_vec(),
            layers,
            num_classes: shape[0],
        })
    }

    /// Compose and initialize weights from a seeded He-style normal
    /// distribution (std `sqrt(2 / fan_in)`), biases zero.
    pub fn build(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Network> {
        let mut net = Network::compose(input_shape, specs)?;
        let mut rng = rng_for(seed, stream::INIT, &[]);
        for layer in &mut net.layers {
            let fan_in = layer.fan_in();
            if fan_in == 0 {
                continue;
            }
            let std = (2.0 / fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("std is positive");
            let weight = match layer {
                Layer::Affine(a) => &mut a.weight,
                Layer::Conv(c) => &mut c.weight,
                _ => unreachable!(),
            };
            for v in weight.data_mut() {
                *v = normal.sample(&mut rng);
            }
        }
        Ok(net)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Total hidden plus output neuron count: the sum of affine and
    /// convolution output sizes.
    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(Layer::neuron_count).sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::config(format!(
                "input shape {:?} does not match network input {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.num_classes {
            return Err(Error::input(format!(
                "label {label} out of range for {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Activations after every layer; `result[i]` is the output of layer `i`.
    fn run_forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for layer in &self.layers {
            let mut out = vec![0.0; layer.out_len()];
            layer.forward(cur, &mut out);
            acts.push(out);
            cur = acts.last().expect("just pushed");
        }
        acts
    }

    /// Logit vector for `x`. Deterministic for fixed weights.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let acts = self.run_forward(x.data());
        Tensor::new(vec![self.num_classes], acts.into_iter().last().expect("nonempty"))
    }

    /// Like [`Network::forward`], but returns the activations after every
    /// layer (flattened), for inspection and bound-containment checks.
    pub fn forward_trace(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        self.run_forward(x.data())
            .into_iter()
            .zip(&self.layers)
            .map(|(data, layer)| Tensor::new(layer.out_shape(), data))
            .collect()
    }

    /// Softmax cross-entropy of a logit slice against `label`, with the
    /// gradient w.r.t. the logits (softmax minus one-hot).
    fn loss_and_logit_grad(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let loss = sum.ln() - (logits[label] - max);
        for e in &mut exps {
            *e /= sum;
        }
        exps[label] -= 1.0;
        (loss, exps)
    }

    /// Softmax cross-entropy loss of `x` against `label`.
    pub fn loss(&self, x: &Tensor, label: usize) -> Result<f64> {
        self.check_input(x)?;
        self.check_label(label)?;
        let acts = self.run_forward(x.data());
        Ok(Self::loss_and_logit_grad(acts.last().expect("nonempty"), label).0)
    }

    fn backprop(
        &self,
        x: &[f64],
        acts: &[Vec<f64>],
        mut grad: Vec<f64>,
        mut pgrads: Option<&mut Gradients>,
    ) -> Vec<f64> {
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = if i == 0 { x } else { &acts[i - 1] };
            let mut grad_in = vec![0.0; layer.in_len()];
            let pg = pgrads.as_deref_mut().and_then(|g| g.layer_mut(i));
            layer.backward(input, &grad, &mut grad_in, pg);
            grad = grad_in;
        }
        grad
    }

    /// Loss, parameter gradients, and the input gradient for one sample.
    pub fn loss_and_grads(&self, x: &Tensor, label: usize) -> Result<(f64, Gradients, Tensor)> {
        let mut grads = Gradients::zeros_like(self);
        let (loss, grad_input) = self.loss_grads_into(x, label, &mut grads)?;
        Ok((loss, grads, grad_input))
    }

    /// Accumulating variant of [`Network::loss_and_grads`]: parameter
    /// gradients are added into `grads` (callers average over a batch).
    pub fn loss_grads_into(
        &self,
        x: &Tensor,
        label: usize,
        grads: &mut Gradients,
    ) -> Result<(f64, Tensor)> {
        self.check_input(x)?;
        self.check_label(label)?;
        if !grads.shape_matches(self) {
            return Err(Error::config("gradient buffer does not match network layers"));
        }
        let acts = self.run_forward(x.data());
        let (loss, logit_grad) = Self::loss_and_logit_grad(acts.last().expect("nonempty"), label);
        let grad_input = self.backprop(x.data(), &acts, logit_grad, Some(grads));
        Ok((loss, Tensor::new(self.input_shape.clone(), grad_input)?))
    }

    /// Loss and input gradient only; skips parameter gradients. This is the
    /// attack hot path.
    pub fn loss_and_input_grad(&self, x: &Tensor, label: usize) -> Result<(f64, Tensor)> {
        self.check_input(x)?;
        self.check_label(label)?;
        let acts = self.run_forward(x.data());
        let (loss, logit_grad) = Self::loss_and_logit_grad(acts.last().expect("nonempty"), label);
        let grad_input = self.backprop(x.data(), &acts, logit_grad, None);
        Ok((loss, Tensor::new(self.input_shape.clone(), grad_input)?))
    }

    /// Predicted class of `x`: argmax of the logits, ties toward the
    /// smallest index.
    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        Ok(self.forward(x)?.argmax())
    }

    /// Apply `w -= delta` style updates; used by the optimizer.
    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Add `delta` to a single parameter element. Test and oracle support
    /// (finite differences).
    pub fn nudge_param(
        &mut self,
        layer: usize,
        kind: ParamKind,
        index: usize,
        delta: f64,
    ) -> Result<()> {
        let l = self
            .layers
            .get_mut(layer)
            .ok_or_else(|| Error::config(format!("no layer {layer}")))?;
        let tensor = match (l, kind) {
            (Layer::Affine(a), ParamKind::Weight) => &mut a.weight,
            (Layer::Affine(a), ParamKind::Bias) => &mut a.bias,
            (Layer::Conv(c), ParamKind::Weight) => &mut c.weight,
            (Layer::Conv(c), ParamKind::Bias) => &mut c.bias,
            _ => return Err(Error::config(format!("layer {layer} has no parameters"))),
        };
        let slot = tensor
            .data_mut()
            .get_mut(index)
            .ok_or_else(|| Error::config(format!("parameter index {index} out of range")))?;
        *slot += delta;
        Ok(())
    }

    /// Overwrite parameters with uniform random values in `[-scale, scale]`.
    /// Useful for randomized property tests.
    pub fn randomize_params(&mut self, seed: u64, scale: f64) {
        let mut rng = rng_for(seed, stream::INIT, &[1]);
        for layer in &mut self.layers {
            let tensors: Vec<&mut Tensor> = match layer {
                Layer::Affine(a) => vec![&mut a.weight, &mut a.bias],
                Layer::Conv(c) => vec![&mut c.weight, &mut c.bias],
                _ => continue,
            };
            for t in tensors {
                for v in t.data_mut() {
                    *v = rng.random_range(-scale..=scale);
                }
            }
        }
    }
}

/// Built-in model architectures plus free-form layer lists.
#[derive(Debug, Clone, PartialEq)]
pub enum Architecture {
    /// 28×28×1 input, two stride-2 4×4 valid convolutions (16 and 32
    /// filters), then dense 100 and dense 10: 3,614 counted neurons.
    MnistCnn,
    /// The same stack on 32×32×3 input: 4,862 counted neurons.
    CifarCnn,
    /// 784-100-10 fully-connected baseline for 28×28×1 images.
    MnistMlp,
    Custom { input_shape: Vec<usize>, layers: Vec<LayerSpec> },
}

impl Architecture {
    pub fn parse(name: &str) -> Result<Architecture> {
        match name {
            "mnist-cnn" => Ok(Architecture::MnistCnn),
            "cifar-cnn" => Ok(Architecture::CifarCnn),
            "mnist-mlp" => Ok(Architecture::MnistMlp),
            other => Err(Error::config(format!(
                "unknown architecture '{other}' (expected mnist-cnn, cifar-cnn or mnist-mlp)"
            ))),
        }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            Architecture::MnistCnn | Architecture::MnistMlp => vec![28, 28, 1],
            Architecture::CifarCnn => vec![32, 32, 3],
            Architecture::Custom { input_shape, .. } => input_shape.clone(),
        }
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        use LayerSpec::*;
        match self {
            Architecture::MnistCnn | Architecture::CifarCnn => vec![
                Conv { filters: 16, kernel_h: 4, kernel_w: 4, stride: 2 },
                Relu,
                Conv { filters: 32, kernel_h: 4, kernel_w: 4, stride: 2 },
                Relu,
                Flatten,
                Affine { out_dim: 100 },
                Relu,
                Affine { out_dim: 10 },
            ],
            Architecture::MnistMlp => vec![
                Flatten,
                Affine { out_dim: 100 },
                Relu,
                Affine { out_dim: 10 },
            ],
            Architecture::Custom { layers, .. } => layers.clone(),
        }
    }

    /// Build the network with seeded initialization.
    pub fn build(&self, seed: u64) -> Result<Network> {
        Network::build(&self.input_shape(), &self.layer_specs(), seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_affine(dim: usize) -> Network {
        let mut net =
            Network::compose(&[dim], &[LayerSpec::Affine { out_dim: dim }]).unwrap();
        if let Layer::Affine(a) = &mut net.layers_mut()[0] {
            for i in 0..dim {
                a.weight.data_mut()[i * dim + i] = 1.0;
            }
        }
        net
    }

    #[test]
    fn identity_affine_forward() {
        let net = identity_affine(2);
        let y = net.forward(&Tensor::from_slice(&[0.3, 0.7])).unwrap();
        assert_eq!(y.data(), &[0.3, 0.7]);
    }

    #[test]
    fn affine_forward_hand_multiply() {
        // W = [[1,2],[3,4]], b = [0,1], x = [1,1] -> [3, 8]
        let mut net =
            Network::compose(&[2], &[LayerSpec::Affine { out_dim: 2 }]).unwrap();
        if let Layer::Affine(a) = &mut net.layers_mut()[0] {
            a.weight.data_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
            a.bias.data_mut().copy_from_slice(&[0.0, 1.0]);
        }
        let y = net.forward(&Tensor::from_slice(&[1.0, 1.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 8.0]);
    }

    #[test]
    fn relu_forward_in_network() {
        let net = Network::compose(&[2], &[LayerSpec::Relu]).unwrap();
        let y = net.forward(&Tensor::from_slice(&[-1.0, 2.0])).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0]);
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let net = identity_affine(2);
        let err = net.forward(&Tensor::from_slice(&[1.0, 2.0, 3.0]));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn uniform_logits_loss_is_ln_k() {
        for k in [2usize, 3, 10] {
            let (loss, grad) = Network::loss_and_logit_grad(&vec![0.0; k], 0);
            assert!((loss - (k as f64).ln()).abs() < 1e-12);
            assert!((grad[0] - (1.0 / k as f64 - 1.0)).abs() < 1e-12);
            for &g in &grad[1..] {
                assert!((g - 1.0 / k as f64).abs() < 1e-12);
            }
        }
        // K = 2: loss ln 2, logit gradient [-0.5, +0.5]
        let (loss, grad) = Network::loss_and_logit_grad(&[0.0, 0.0], 0);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((grad[0] + 0.5).abs() < 1e-12 && (grad[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range_is_input_error() {
        let net = identity_affine(2);
        let err = net.loss_and_grads(&Tensor::from_slice(&[0.1, 0.2]), 2);
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn forward_is_pure() {
        let net = Architecture::MnistMlp.build(11).unwrap();
        let x = Tensor::filled(&[28, 28, 1], 0.25);
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn table_architecture_neuron_counts() {
        assert_eq!(Architecture::MnistCnn.build(0).unwrap().neuron_count(), 3_614);
        assert_eq!(Architecture::CifarCnn.build(0).unwrap().neuron_count(), 4_862);
    }

    #[test]
    fn custom_flatten_affine_counts_ten_neurons() {
        let arch = Architecture::Custom {
            input_shape: vec![28, 28],
            layers: vec![LayerSpec::Flatten, LayerSpec::Affine { out_dim: 10 }],
        };
        let net = arch.build(3).unwrap();
        assert_eq!(net.layers()[1].in_shape(), vec![784]);
        assert_eq!(net.neuron_count(), 10);
    }

    #[test]
    fn non_composable_shapes_fail() {
        let arch = Architecture::Custom {
            input_shape: vec![28, 28],
            layers: vec![LayerSpec::Affine { out_dim: 10 }],
        };
        assert!(matches!(arch.build(0), Err(Error::Config(_))));
    }
}
