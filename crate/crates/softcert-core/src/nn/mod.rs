//! Minimal neural-network core: tensors flow through affine, convolution,
//! ReLU and flatten layers; gradients come from reverse-mode accumulation;
//! updates from momentum SGD.

mod checkpoint;
mod layer;
pub(crate) mod math;
mod network;
mod optim;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use layer::{AffineLayer, ConvLayer, Layer, LayerGrad, LayerSpec};
pub use network::{Architecture, Gradients, Network, ParamKind};
pub use optim::SgdMomentum;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One training or test point: an input tensor with values in `[0, 1]`
/// and its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub input: Tensor,
    pub label: usize,
}

impl LabeledSample {
    /// Build a sample, clamping input values into `[0, 1]` and checking
    /// the label against `num_classes`.
    pub fn new(mut input: Tensor, label: usize, num_classes: usize) -> Result<Self> {
        if label >= num_classes {
            return Err(Error::input(format!(
                "label {label} out of range for {num_classes} classes"
            )));
        }
        input.clamp_in_place(0.0, 1.0);
        Ok(LabeledSample { input, label })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_clamps_and_validates() {
        let s = LabeledSample::new(Tensor::from_slice(&[-0.5, 0.5, 1.5]), 1, 2).unwrap();
        assert_eq!(s.input.data(), &[0.0, 0.5, 1.0]);
        assert!(LabeledSample::new(Tensor::from_slice(&[0.0]), 2, 2).is_err());
    }
}
