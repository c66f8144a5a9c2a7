//! Interval (Box) bound propagation: one concrete lower/upper bound per
//! neuron, pushed through each layer transformer.

use crate::certify::InputRegion;
use crate::error::{Error, Result};
use crate::nn::{Layer, Network};
use crate::tensor::Tensor;

/// Concrete per-neuron bounds for one layer's output.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBox {
    pub lower: Tensor,
    pub upper: Tensor,
}

impl IntervalBox {
    /// True when `other` is contained in `self` elementwise.
    pub fn contains(&self, other: &IntervalBox) -> bool {
        self.lower
            .data()
            .iter()
            .zip(other.lower.data())
            .all(|(a, b)| a <= b)
            && self
                .upper
                .data()
                .iter()
                .zip(other.upper.data())
                .all(|(a, b)| a >= b)
    }

    /// True when the point lies within the bounds elementwise.
    pub fn contains_point(&self, point: &[f64]) -> bool {
        point
            .iter()
            .zip(self.lower.data())
            .zip(self.upper.data())
            .all(|((&v, &l), &u)| l <= v && v <= u)
    }
}

/// Interval transformer for one layer. Affine and convolution layers split
/// weights by sign; ReLU maps `[l, u]` to `[max(l,0), max(u,0)]`; flatten
/// only reshapes. `slack` is the outward-rounding margin added after
/// affine/convolution arithmetic (max and copy are exact in floating
/// point, so the other layers take none).
pub(crate) fn transform_layer(
    layer: &Layer,
    in_lo: &[f64],
    in_hi: &[f64],
    slack: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = layer.out_len();
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    match layer {
        Layer::Affine(a) => {
            let w = a.weight.data();
            let b = a.bias.data();
            for o in 0..a.out_dim {
                let row = &w[o * a.in_dim..(o + 1) * a.in_dim];
                let (mut acc_lo, mut acc_hi) = (b[o], b[o]);
                for ((&wi, &l), &u) in row.iter().zip(in_lo).zip(in_hi) {
                    if wi >= 0.0 {
                        acc_lo += wi * l;
                        acc_hi += wi * u;
                    } else {
                        acc_lo += wi * u;
                        acc_hi += wi * l;
                    }
                }
                lo[o] = acc_lo - slack;
                hi[o] = acc_hi + slack;
            }
        }
        Layer::Conv(c) => {
            for o in 0..n {
                let b = c.bias_of(o);
                let (mut acc_lo, mut acc_hi) = (b, b);
                c.for_each_contribution(o, |ix, w| {
                    if w >= 0.0 {
                        acc_lo += w * in_lo[ix];
                        acc_hi += w * in_hi[ix];
                    } else {
                        acc_lo += w * in_hi[ix];
                        acc_hi += w * in_lo[ix];
                    }
                });
                lo[o] = acc_lo - slack;
                hi[o] = acc_hi + slack;
            }
        }
        Layer::Relu { .. } => {
            for (o, &l) in lo.iter_mut().zip(in_lo) {
                *o = l.max(0.0);
            }
            for (o, &u) in hi.iter_mut().zip(in_hi) {
                *o = u.max(0.0);
            }
        }
        Layer::Flatten { .. } => {
            lo.copy_from_slice(in_lo);
            hi.copy_from_slice(in_hi);
        }
    }
    (lo, hi)
}

/// Propagate `region` through every layer in the Box domain with an
/// explicit outward-rounding slack.
pub fn box_propagate_with_slack(
    network: &Network,
    region: &InputRegion,
    slack: f64,
) -> Result<Vec<IntervalBox>> {
    if region.lower().shape() != network.input_shape() {
        return Err(Error::config(format!(
            "region shape {:?} does not match network input {:?}",
            region.lower().shape(),
            network.input_shape()
        )));
    }
    let mut out = Vec::with_capacity(network.layers().len());
    let mut lo = region.lower().data().to_vec();
    let mut hi = region.upper().data().to_vec();
    for layer in network.layers() {
        let (nlo, nhi) = transform_layer(layer, &lo, &hi, slack);
        lo = nlo;
        hi = nhi;
        out.push(IntervalBox {
            lower: Tensor::new(layer.out_shape(), lo.clone())?,
            upper: Tensor::new(layer.out_shape(), hi.clone())?,
        });
    }
    Ok(out)
}

/// Propagate with the default slack (see
/// [`crate::certify::DEFAULT_BOUND_SLACK`]).
pub fn box_propagate(network: &Network, region: &InputRegion) -> Result<Vec<IntervalBox>> {
    box_propagate_with_slack(network, region, crate::certify::DEFAULT_BOUND_SLACK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Layer, LayerSpec, Network};

    fn affine_net(weights: &[f64], bias: &[f64], in_dim: usize, out_dim: usize) -> Network {
        let mut net =
            Network::compose(&[in_dim], &[LayerSpec::Affine { out_dim }]).unwrap();
        if let Layer::Affine(a) = &mut net.layers_mut()[0] {
            a.weight.data_mut().copy_from_slice(weights);
            a.bias.data_mut().copy_from_slice(bias);
        }
        net
    }

    #[test]
    fn identity_layer_preserves_unit_box() {
        let net = affine_net(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], 2, 2);
        let region = InputRegion::from_bounds(
            Tensor::from_slice(&[0.0, 0.0]),
            Tensor::from_slice(&[1.0, 1.0]),
        )
        .unwrap();
        let boxes = box_propagate_with_slack(&net, &region, 0.0).unwrap();
        assert_eq!(boxes[0].lower.data(), &[0.0, 0.0]);
        assert_eq!(boxes[0].upper.data(), &[1.0, 1.0]);
    }

    #[test]
    fn difference_of_unit_intervals() {
        // y = x1 - x2 over [0,1]^2 -> [-1, 1]
        let net = affine_net(&[1.0, -1.0], &[0.0], 2, 1);
        let region = InputRegion::from_bounds(
            Tensor::from_slice(&[0.0, 0.0]),
            Tensor::from_slice(&[1.0, 1.0]),
        )
        .unwrap();
        let boxes = box_propagate_with_slack(&net, &region, 0.0).unwrap();
        assert_eq!(boxes[0].lower.data(), &[-1.0]);
        assert_eq!(boxes[0].upper.data(), &[1.0]);
    }

    #[test]
    fn relu_transformer_clamps_negative_side() {
        let net = Network::compose(&[1], &[LayerSpec::Relu]).unwrap();
        let region = InputRegion::from_bounds(
            Tensor::from_slice(&[-1.0]),
            Tensor::from_slice(&[2.0]),
        )
        .unwrap();
        let boxes = box_propagate_with_slack(&net, &region, 0.0).unwrap();
        assert_eq!(boxes[0].lower.data(), &[0.0]);
        assert_eq!(boxes[0].upper.data(), &[2.0]);
    }

    #[test]
    fn default_slack_widens_by_at_most_1e9_per_affine_layer() {
        let net = affine_net(&[1.0], &[0.0], 1, 1);
        let region = InputRegion::from_bounds(
            Tensor::from_slice(&[0.25]),
            Tensor::from_slice(&[0.75]),
        )
        .unwrap();
        let boxes = box_propagate(&net, &region).unwrap();
        assert!((boxes[0].lower.data()[0] - (0.25 - 1e-9)).abs() < 1e-15);
        assert!((boxes[0].upper.data()[0] - (0.75 + 1e-9)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let net = affine_net(&[1.0], &[0.0], 1, 1);
        let region = InputRegion::from_bounds(
            Tensor::from_slice(&[0.0, 0.0]),
            Tensor::from_slice(&[1.0, 1.0]),
        )
        .unwrap();
        assert!(box_propagate(&net, &region).is_err());
    }
}
