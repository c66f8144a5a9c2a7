//! Layer kinds, shape inference, and per-layer forward/backward passes.
//!
//! Images use channels-last layout: shape `[height, width, channels]`.
//! Convolutions are valid (no padding) with a single stride for both axes.

use crate::error::{Error, Result};
use crate::nn::math::{axpy, dot};
use crate::tensor::Tensor;

/// Parameter-free description of one layer, as used by architecture specs
/// and checkpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Affine { out_dim: usize },
    Conv { filters: usize, kernel_h: usize, kernel_w: usize, stride: usize },
    Relu,
    Flatten,
}

/// Fully-connected layer: `y = W x + b` with `W` of shape `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
    pub(crate) weight: Tensor,
    pub(crate) bias: Tensor,
}

/// Valid convolution over `[h, w, c]` inputs producing `[oh, ow, filters]`,
/// weight shape `[filters, kernel_h, kernel_w, in_channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub(crate) in_shape: [usize; 3],
    pub(crate) out_shape: [usize; 3],
    pub(crate) kernel_h: usize,
    pub(crate) kernel_w: usize,
    pub(crate) stride: usize,
    pub(crate) weight: Tensor,
    pub(crate) bias: Tensor,
}

/// One network layer with inferred input/output shapes and, for affine and
/// convolution layers, its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Affine(AffineLayer),
    Conv(ConvLayer),
    Relu { shape: Vec<usize> },
    Flatten { in_shape: Vec<usize> },
}

/// Gradients for one parametric layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Tensor,
    pub bias: Tensor,
}

fn conv_out_dim(input: usize, kernel: usize, stride: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::config("conv kernel and stride must be positive"));
    }
    if kernel > input {
        return Err(Error::config(format!(
            "conv kernel {kernel} exceeds input extent {input}"
        )));
    }
    Ok((input - kernel) / stride + 1)
}

impl Layer {
    /// Infer the layer for `spec` applied to `in_shape`; parameters start
    /// as zeros and are filled in by the initializer or checkpoint loader.
    pub(crate) fn from_spec(spec: &LayerSpec, in_shape: &[usize]) -> Result<Layer> {
        match *spec {
            LayerSpec::Affine { out_dim } => {
                if in_shape.len() != 1 {
                    return Err(Error::config(format!(
                        "affine layer needs a rank-1 input, got shape {in_shape:?} (add a flatten layer first)"
                    )));
                }
                if out_dim == 0 {
                    return Err(Error::config("affine out_dim must be positive"));
                }
                let in_dim = in_shape[0];
                Ok(Layer::Affine(AffineLayer {
                    in_dim,
                    out_dim,
                    weight: Tensor::zeros(&[out_dim, in_dim]),
                    bias: Tensor::zeros(&[out_dim]),
                }))
            }
            LayerSpec::Conv { filters, kernel_h, kernel_w, stride } => {
                if in_shape.len() != 3 {
                    return Err(Error::config(format!(
                        "conv layer needs a rank-3 [h, w, c] input, got shape {in_shape:?}"
                    )));
                }
                if filters == 0 {
                    return Err(Error::config("conv filter count must be positive"));
                }
                let (h, w, c) = (in_shape[0], in_shape[1], in_shape[2]);
                let oh = conv_out_dim(h, kernel_h, stride)?;
                let ow = conv_out_dim(w, kernel_w, stride)?;
                Ok(Layer::Conv(ConvLayer {
                    in_shape: [h, w, c],
                    out_shape: [oh, ow, filters],
                    kernel_h,
                    kernel_w,
                    stride,
                    weight: Tensor::zeros(&[filters, kernel_h, kernel_w, c]),
                    bias: Tensor::zeros(&[filters]),
                }))
            }
            LayerSpec::Relu => Ok(Layer::Relu { shape: in_shape.to_vec() }),
            LayerSpec::Flatten => Ok(Layer::Flatten { in_shape: in_shape.to_vec() }),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Affine(a) => LayerSpec::Affine { out_dim: a.out_dim },
            Layer::Conv(c) => LayerSpec::Conv {
                filters: c.out_shape[2],
                kernel_h: c.kernel_h,
                kernel_w: c.kernel_w,
                stride: c.stride,
            },
            Layer::Relu { .. } => LayerSpec::Relu,
            Layer::Flatten { .. } => LayerSpec::Flatten,
        }
    }

    pub fn in_shape(&self) -> Vec<usize> {
        match self {
            Layer::Affine(a) => vec![a.in_dim],
            Layer::Conv(c) => c.in_shape.to_vec(),
            Layer::Relu { shape } => shape.clone(),
            Layer::Flatten { in_shape } => in_shape.clone(),
        }
    }

    pub fn out_shape(&self) -> Vec<usize> {
        match self {
            Layer::Affine(a) => vec![a.out_dim],
            Layer::Conv(c) => c.out_shape.to_vec(),
            Layer::Relu { shape } => shape.clone(),
            Layer::Flatten { in_shape } => vec![in_shape.iter().product()],
        }
    }

    pub fn out_len(&self) -> usize {
        self.out_shape().iter().product()
    }

    pub fn in_len(&self) -> usize {
        self.in_shape().iter().product()
    }

    /// Number of neurons this layer contributes to the architecture count
    /// (affine and convolution outputs only).
    pub fn neuron_count(&self) -> usize {
        match self {
            Layer::Affine(_) | Layer::Conv(_) => self.out_len(),
            _ => 0,
        }
    }

    pub fn weight(&self) -> Option<&Tensor> {
        match self {
            Layer::Affine(a) => Some(&a.weight),
            Layer::Conv(c) => Some(&c.weight),
            _ => None,
        }
    }

    pub fn bias(&self) -> Option<&Tensor> {
        match self {
            Layer::Affine(a) => Some(&a.bias),
            Layer::Conv(c) => Some(&c.bias),
            _ => None,
        }
    }

    /// Fan-in used by the weight initializer.
    pub(crate) fn fan_in(&self) -> usize {
        match self {
            Layer::Affine(a) => a.in_dim,
            Layer::Conv(c) => c.kernel_h * c.kernel_w * c.in_shape[2],
            _ => 0,
        }
    }

    pub(crate) fn zero_grad(&self) -> Option<LayerGrad> {
        match self {
            Layer::Affine(a) => Some(LayerGrad {
                weight: Tensor::zeros(a.weight.shape()),
                bias: Tensor::zeros(a.bias.shape()),
            }),
            Layer::Conv(c) => Some(LayerGrad {
                weight: Tensor::zeros(c.weight.shape()),
                bias: Tensor::zeros(c.bias.shape()),
            }),
            _ => None,
        }
    }

    pub(crate) fn forward(&self, input: &[f64], output: &mut [f64]) {
        debug_assert_eq!(input.len(), self.in_len());
        debug_assert_eq!(output.len(), self.out_len());
        match self {
            Layer::Affine(a) => {
                let w = a.weight.data();
                let b = a.bias.data();
                for o in 0..a.out_dim {
                    output[o] = b[o] + dot(&w[o * a.in_dim..(o + 1) * a.in_dim], input);
                }
            }
            Layer::Conv(c) => c.forward(input, output),
            Layer::Relu { .. } => {
                for (o, &x) in output.iter_mut().zip(input) {
                    *o = x.max(0.0);
                }
            }
            Layer::Flatten { .. } => output.copy_from_slice(input),
        }
    }

    /// Propagate `grad_out` back to `grad_in`, optionally accumulating
    /// parameter gradients into `pgrad`.
    pub(crate) fn backward(
        &self,
        input: &[f64],
        grad_out: &[f64],
        grad_in: &mut [f64],
        pgrad: Option<&mut LayerGrad>,
    ) {
        debug_assert_eq!(input.len(), self.in_len());
        debug_assert_eq!(grad_out.len(), self.out_len());
        debug_assert_eq!(grad_in.len(), self.in_len());
        match self {
            Layer::Affine(a) => {
                let w = a.weight.data();
                grad_in.fill(0.0);
                for o in 0..a.out_dim {
                    let g = grad_out[o];
                    if g != 0.0 {
                        axpy(grad_in, g, &w[o * a.in_dim..(o + 1) * a.in_dim]);
                    }
                }
                if let Some(pg) = pgrad {
                    let wg = pg.weight.data_mut();
                    let bg = pg.bias.data_mut();
                    for o in 0..a.out_dim {
                        let g = grad_out[o];
                        bg[o] += g;
                        if g != 0.0 {
                            axpy(&mut wg[o * a.in_dim..(o + 1) * a.in_dim], g, input);
                        }
                    }
                }
            }
            Layer::Conv(c) => c.backward(input, grad_out, grad_in, pgrad),
            Layer::Relu { .. } => {
                for ((gi, &x), &go) in grad_in.iter_mut().zip(input).zip(grad_out) {
                    *gi = if x > 0.0 { go } else { 0.0 };
                }
            }
            Layer::Flatten { .. } => grad_in.copy_from_slice(grad_out),
        }
    }
}

impl ConvLayer {
    #[inline]
    fn geometry(&self) -> (usize, usize, usize, usize, usize, usize) {
        let [_, w, cin] = self.in_shape;
        let [oh, ow, filters] = self.out_shape;
        (w, cin, oh, ow, filters, self.kernel_w * cin)
    }

    fn forward(&self, input: &[f64], output: &mut [f64]) {
        let (w, cin, oh, ow, filters, row_len) = self.geometry();
        let wgt = self.weight.data();
        let b = self.bias.data();
        for oy in 0..oh {
            for ox in 0..ow {
                let out_base = (oy * ow + ox) * filters;
                for f in 0..filters {
                    let mut acc = b[f];
                    for ky in 0..self.kernel_h {
                        let in_off = ((oy * self.stride + ky) * w + ox * self.stride) * cin;
                        let w_off = (f * self.kernel_h + ky) * row_len;
                        acc += dot(&input[in_off..in_off + row_len], &wgt[w_off..w_off + row_len]);
                    }
                    output[out_base + f] = acc;
                }
            }
        }
    }

    fn backward(
        &self,
        input: &[f64],
        grad_out: &[f64],
        grad_in: &mut [f64],
        pgrad: Option<&mut LayerGrad>,
    ) {
        let (w, cin, oh, ow, filters, row_len) = self.geometry();
        let wgt = self.weight.data();
        grad_in.fill(0.0);
        let mut pg = pgrad;
        for oy in 0..oh {
            for ox in 0..ow {
                let out_base = (oy * ow + ox) * filters;
                for f in 0..filters {
                    let g = grad_out[out_base + f];
                    if g == 0.0 {
                        continue;
                    }
                    for ky in 0..self.kernel_h {
                        let in_off = ((oy * self.stride + ky) * w + ox * self.stride) * cin;
                        let w_off = (f * self.kernel_h + ky) * row_len;
                        axpy(&mut grad_in[in_off..in_off + row_len], g, &wgt[w_off..w_off + row_len]);
                        if let Some(pg) = pg.as_deref_mut() {
                            axpy(
                                &mut pg.weight.data_mut()[w_off..w_off + row_len],
                                g,
                                &input[in_off..in_off + row_len],
                            );
                        }
                    }
                    if let Some(pg) = pg.as_deref_mut() {
                        pg.bias.data_mut()[f] += g;
                    }
                }
            }
        }
    }

    /// Visit every (input_flat_index, weight) pair feeding one output
    /// neuron. Used by the certifiers, which treat the convolution as a
    /// sparse affine map.
    pub(crate) fn for_each_contribution(
        &self,
        out_index: usize,
        mut visit: impl FnMut(usize, f64),
    ) {
        let (w, cin, _oh, ow, filters, _row_len) = self.geometry();
        let f = out_index % filters;
        let pos = out_index / filters;
        let oy = pos / ow;
        let ox = pos % ow;
        let wgt = self.weight.data();
        for ky in 0..self.kernel_h {
            for kx in 0..self.kernel_w {
                for c in 0..cin {
                    let in_idx = ((oy * self.stride + ky) * w + (ox * self.stride + kx)) * cin + c;
                    let w_idx = ((f * self.kernel_h + ky) * self.kernel_w + kx) * cin + c;
                    visit(in_idx, wgt[w_idx]);
                }
            }
        }
    }

    pub(crate) fn bias_of(&self, out_index: usize) -> f64 {
        self.bias.data()[out_index % self.out_shape[2]]
    }
}
