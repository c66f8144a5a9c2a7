//! Certification-guided ("soft") adversarial training at desk scale.
//!
//! The crate provides four building blocks and the training loop that ties
//! them together:
//!
//! - [`tensor`] / [`nn`]: a minimal dense-tensor neural-network core
//!   (affine, convolution, ReLU, flatten) with reverse-mode gradients and
//!   momentum SGD.
//! - [`attack`]: FGSM and PGD adversarial example generation under an
//!   L∞ budget.
//! - [`certify`]: per-input robustness certification via interval (Box)
//!   and DeepPoly-style symbolic bound propagation, partitioning a dataset
//!   into misclassified / correct-but-unverified / correct-and-verified.
//! - [`train`]: natural, adversarial, and soft training epochs. A soft
//!   epoch trains certified-robust inputs on their clean values and
//!   everything else on PGD adversaries.
//!
//! All randomness is driven by explicit seeds; repeated runs with the same
//! seed produce bit-identical results on one machine.

pub mod attack;
pub mod certify;
pub mod data;
pub mod error;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod train;

pub use attack::AttackConfig;
pub use certify::{
    AbstractDomain, DeepPolyElement, InputRegion, IntervalBox, PartitionedDataset,
    VerificationStatus,
};
pub use data::{Dataset, Provenance};
pub use error::{Error, Result};
pub use nn::{Architecture, Gradients, LabeledSample, Layer, LayerSpec, Network, SgdMomentum};
pub use tensor::Tensor;
pub use train::{EpochMetrics, TrainMode, TrainingConfig, TrainingOutcome};
