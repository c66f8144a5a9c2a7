//! DeepPoly-style symbolic bound propagation.
//!
//! Every neuron carries an affine lower and upper bound over the previous
//! layer's neurons. Affine and convolution layers are represented exactly
//! (the expression is the layer map itself, with convolution treated as a
//! sparse affine transform); ReLU neurons carry the triangle relaxation.
//! Concrete bounds come from back-substituting the expressions all the way
//! to the input region, then intersecting with plain interval propagation
//! of the previous layer's concrete bounds — the intersection of two sound
//! enclosures is sound, and it makes DeepPoly bounds at least as tight as
//! Box bounds neuron for neuron.

use crate::certify::{interval, InputRegion};
use crate::error::{Error, Result};
use crate::nn::{Layer, Network};

/// Symbolic bounds of one layer relative to its input layer.
#[derive(Debug, Clone, PartialEq)]
pub enum SymbolicBounds {
    /// Affine or convolution layer: both bounds equal the exact layer map.
    ExactAffine,
    /// Per-neuron ReLU relaxation: `lower_slope[i] * x_i <= y_i` and
    /// `y_i <= upper_slope[i] * x_i + upper_offset[i]`.
    Relu {
        lower_slope: Vec<f64>,
        upper_slope: Vec<f64>,
        upper_offset: Vec<f64>,
    },
    /// Flatten: the identity on flat data.
    Identity,
}

/// Per-layer result of a DeepPoly pass: the symbolic relation to the
/// previous layer plus concrete bounds for every neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepPolyElement {
    pub symbolic: SymbolicBounds,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// A batch of affine forms over some layer's outputs: row r represents
/// `sum_i coef[r,i] * x_i + bias[r]`, kept separately for the lower and
/// upper bound directions.
struct Forms {
    rows: usize,
    cols: usize,
    lower_coef: Vec<f64>,
    lower_bias: Vec<f64>,
    upper_coef: Vec<f64>,
    upper_bias: Vec<f64>,
}

impl Forms {
    fn from_rows(rows: usize, cols: usize, coef: Vec<f64>, bias: Vec<f64>) -> Forms {
        Forms {
            rows,
            cols,
            lower_coef: coef.clone(),
            lower_bias: bias.clone(),
            upper_coef: coef,
            upper_bias: bias,
        }
    }

    /// Exact action of an affine or convolution layer, as forms over the
    /// layer's input.
    fn from_layer(layer: &Layer) -> Forms {
        match layer {
            Layer::Affine(a) => Forms::from_rows(
                a.out_dim,
                a.in_dim,
                a.weight.data().to_vec(),
                a.bias.data().to_vec(),
            ),
            Layer::Conv(c) => {
                let rows = layer.out_len();
                let cols = layer.in_len();
                let mut coef = vec![0.0; rows * cols];
                let mut bias = vec![0.0; rows];
                for o in 0..rows {
                    bias[o] = c.bias_of(o);
                    let row = &mut coef[o * cols..(o + 1) * cols];
                    c.for_each_contribution(o, |ix, w| row[ix] += w);
                }
                Forms::from_rows(rows, cols, coef, bias)
            }
            _ => unreachable!("forms start at parametric layers"),
        }
    }
}

/// Substitute one coefficient matrix through an exact affine layer:
/// `new = coef * W`, `bias += coef * b`.
fn substitute_affine_side(
    coef: &[f64],
    bias: &mut [f64],
    rows: usize,
    cols: usize,
    layer: &Layer,
) -> Vec<f64> {
    let new_cols = layer.in_len();
    let mut out = vec![0.0; rows * new_cols];
    match layer {
        Layer::Affine(a) => {
            let w = a.weight.data();
            let b = a.bias.data();
            for r in 0..rows {
                let src = &coef[r * cols..(r + 1) * cols];
                let dst = &mut out[r * new_cols..(r + 1) * new_cols];
                for (o, &c) in src.iter().enumerate() {
                    if c != 0.0 {
                        bias[r] += c * b[o];
                        crate::nn::math::axpy(dst, c, &w[o * a.in_dim..(o + 1) * a.in_dim]);
                    }
                }
            }
        }
        Layer::Conv(conv) => {
            for r in 0..rows {
                let src = &coef[r * cols..(r + 1) * cols];
                let dst = &mut out[r * new_cols..(r + 1) * new_cols];
                for (o, &c) in src.iter().enumerate() {
                    if c != 0.0 {
                        bias[r] += c * conv.bias_of(o);
                        conv.for_each_contribution(o, |ix, w| dst[ix] += c * w);
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

/// Substitute the forms through the element describing `layer`, yielding
/// forms over that layer's input.
fn substitute(mut forms: Forms, layer: &Layer, element: &SymbolicBounds) -> Forms {
    match element {
        SymbolicBounds::Identity => forms,
        SymbolicBounds::ExactAffine => {
            let rows = forms.rows;
            let cols = forms.cols;
            let lower = substitute_affine_side(
                &forms.lower_coef,
                &mut forms.lower_bias,
                rows,
                cols,
                layer,
            );
            let upper = substitute_affine_side(
                &forms.upper_coef,
                &mut forms.upper_bias,
                rows,
                cols,
                layer,
            );
            Forms {
                rows,
                cols: layer.in_len(),
                lower_coef: lower,
                lower_bias: forms.lower_bias,
                upper_coef: upper,
                upper_bias: forms.upper_bias,
            }
        }
        SymbolicBounds::Relu { lower_slope, upper_slope, upper_offset } => {
            // A positive coefficient keeps the bound direction; a negative
            // coefficient flips to the opposite relaxation.
            for r in 0..forms.rows {
                let row = &mut forms.lower_coef[r * forms.cols..(r + 1) * forms.cols];
                let bias = &mut forms.lower_bias[r];
                for (i, c) in row.iter_mut().enumerate() {
                    if *c >= 0.0 {
                        *c *= lower_slope[i];
                    } else {
                        *bias += *c * upper_offset[i];
                        *c *= upper_slope[i];
                    }
                }
                let row = &mut forms.upper_coef[r * forms.cols..(r + 1) * forms.cols];
                let bias = &mut forms.upper_bias[r];
                for (i, c) in row.iter_mut().enumerate() {
                    if *c >= 0.0 {
                        *bias += *c * upper_offset[i];
                        *c *= upper_slope[i];
                    } else {
                        *c *= lower_slope[i];
                    }
                }
            }
            forms
        }
    }
}

/// Evaluate forms over the input region, with outward slack.
fn concretize(forms: &Forms, region: &InputRegion, slack: f64) -> (Vec<f64>, Vec<f64>) {
    let lo = region.lower().data();
    let hi = region.upper().data();
    let mut out_lo = vec![0.0; forms.rows];
    let mut out_hi = vec![0.0; forms.rows];
    for r in 0..forms.rows {
        let row = &forms.lower_coef[r * forms.cols..(r + 1) * forms.cols];
        let mut acc = forms.lower_bias[r];
        for ((&c, &l), &h) in row.iter().zip(lo).zip(hi) {
            acc += c.max(0.0) * l + c.min(0.0) * h;
        }
        out_lo[r] = acc - slack;
        let row = &forms.upper_coef[r * forms.cols..(r + 1) * forms.cols];
        let mut acc = forms.upper_bias[r];
        for ((&c, &l), &h) in row.iter().zip(lo).zip(hi) {
            acc += c.max(0.0) * h + c.min(0.0) * l;
        }
        out_hi[r] = acc + slack;
    }
    (out_lo, out_hi)
}

/// Back-substitute forms expressed over the output of layer `upto` down to
/// the input region and concretize.
fn backsub_concretize(
    network: &Network,
    elements: &[DeepPolyElement],
    upto: Option<usize>,
    mut forms: Forms,
    region: &InputRegion,
    slack: f64,
) -> (Vec<f64>, Vec<f64>) {
    if let Some(upto) = upto {
        for j in (0..=upto).rev() {
            forms = substitute(forms, &network.layers()[j], &elements[j].symbolic);
        }
    }
    concretize(&forms, region, slack)
}

/// ReLU relaxation from pre-activation bounds `[l, u]`:
/// - stable positive (`l >= 0`): identity;
/// - stable negative (`u <= 0`): zero;
/// - unstable: upper chord `u (x - l) / (u - l)`, lower slope chosen by the
///   smaller-area rule (`1` if `u >= -l`, else `0`).
fn relu_relaxation(l: f64, u: f64) -> (f64, f64, f64) {
    if l >= 0.0 {
        (1.0, 1.0, 0.0)
    } else if u <= 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        let slope = u / (u - l);
        let lower = if u >= -l { 1.0 } else { 0.0 };
        (lower, slope, -slope * l)
    }
}

/// DeepPoly pass with an explicit outward-rounding slack: returns one
/// element per layer carrying symbolic and concrete bounds.
pub fn deeppoly_bounds_with_slack(
    network: &Network,
    region: &InputRegion,
    slack: f64,
) -> Result<Vec<DeepPolyElement>> {
    if region.lower().shape() != network.input_shape() {
        return Err(Error::config(format!(
            "region shape {:?} does not match network input {:?}",
            region.lower().shape(),
            network.input_shape()
        )));
    }
    let mut elements: Vec<DeepPolyElement> = Vec::with_capacity(network.layers().len());
    for (k, layer) in network.layers().iter().enumerate() {
        let prev_bounds = |elements: &[DeepPolyElement]| -> (Vec<f64>, Vec<f64>) {
            if k == 0 {
                (region.lower().data().to_vec(), region.upper().data().to_vec())
            } else {
                (elements[k - 1].lower.clone(), elements[k - 1].upper.clone())
            }
        };
        let element = match layer {
            Layer::Affine(_) | Layer::Conv(_) => {
                let forms = Forms::from_layer(layer);
                let upto = if k == 0 { None } else { Some(k - 1) };
                let (bs_lo, bs_hi) =
                    backsub_concretize(network, &elements, upto, forms, region, slack);
                let (plo, phi) = prev_bounds(&elements);
                let (iv_lo, iv_hi) = interval::transform_layer(layer, &plo, &phi, slack);
                let lower: Vec<f64> =
                    bs_lo.iter().zip(&iv_lo).map(|(a, b)| a.max(*b)).collect();
                let upper: Vec<f64> =
                    bs_hi.iter().zip(&iv_hi).map(|(a, b)| a.min(*b)).collect();
                DeepPolyElement { symbolic: SymbolicBounds::ExactAffine, lower, upper }
            }
            Layer::Relu { .. } => {
                let (plo, phi) = prev_bounds(&elements);
                let n = plo.len();
                let mut lower_slope = vec![0.0; n];
                let mut upper_slope = vec![0.0; n];
                let mut upper_offset = vec![0.0; n];
                let mut lower = vec![0.0; n];
                let mut upper = vec![0.0; n];
                for i in 0..n {
                    let (ls, us, uo) = relu_relaxation(plo[i], phi[i]);
                    lower_slope[i] = ls;
                    upper_slope[i] = us;
                    upper_offset[i] = uo;
                    lower[i] = plo[i].max(0.0);
                    upper[i] = phi[i].max(0.0);
                }
                DeepPolyElement {
                    symbolic: SymbolicBounds::Relu { lower_slope, upper_slope, upper_offset },
                    lower,
                    upper,
                }
            }
            Layer::Flatten { .. } => {
                let (lower, upper) = prev_bounds(&elements);
                DeepPolyElement { symbolic: SymbolicBounds::Identity, lower, upper }
            }
        };
        elements.push(element);
    }
    Ok(elements)
}

/// DeepPoly pass with the default slack.
pub fn deeppoly_bounds(network: &Network, region: &InputRegion) -> Result<Vec<DeepPolyElement>> {
    deeppoly_bounds_with_slack(network, region, crate::certify::DEFAULT_BOUND_SLACK)
}

/// Certified lower bounds of the logit differences `o_label - o_j` for all
/// `j != label`, back-substituted as single affine forms and intersected
/// with the interval margin from the final concrete bounds.
pub(crate) fn margin_lower_bounds(
    network: &Network,
    elements: &[DeepPolyElement],
    region: &InputRegion,
    label: usize,
    slack: f64,
) -> Vec<f64> {
    let k = network.num_classes();
    let rows = k - 1;
    let mut coef = vec![0.0; rows * k];
    for (r, j) in (0..k).filter(|&j| j != label).enumerate() {
        coef[r * k + label] = 1.0;
        coef[r * k + j] = -1.0;
    }
    let forms = Forms::from_rows(rows, k, coef, vec![0.0; rows]);
    let last = network.layers().len() - 1;
    let (bs_lo, _) = backsub_concretize(network, elements, Some(last), forms, region, slack);

    let final_lo = &elements[last].lower;
    let final_hi = &elements[last].upper;
    (0..k)
        .filter(|&j| j != label)
        .enumerate()
        .map(|(r, j)| bs_lo[r].max(final_lo[label] - final_hi[j]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::interval::box_propagate_with_slack;
    use crate::nn::{Layer, LayerSpec, Network};
    use crate::tensor::Tensor;

    fn two_layer_affine() -> Network {
        // h = (x1 + x2, x1 - x2), out = h1 + h2 == 2*x1
        let mut net = Network::compose(
            &[2],
            &[LayerSpec::Affine { out_dim: 2 }, LayerSpec::Affine { out_dim: 1 }],
        )
        .unwrap();
        if let Layer::Affine(a) = &mut net.layers_mut()[0] {
            a.weight.data_mut().copy_from_slice(&[1.0, 1.0, 1.0, -1.0]);
        }
        if let Layer::Affine(a) = &mut net.layers_mut()[1] {
            a.weight.data_mut().copy_from_slice(&[1.0, 1.0]);
        }
        net
    }

    fn sym_region(r: f64) -> InputRegion {
        InputRegion::from_bounds(
            Tensor::from_slice(&[-r, -r]),
            Tensor::from_slice(&[r, r]),
        )
        .unwrap()
    }

    #[test]
    fn backsub_is_exact_where_box_cancels_nothing() {
        // Back-substitution sees out == 2*x1 and reports [-2, 2] over
        // [-1,1]^2; interval propagation accumulates to [-4, 4].
        let net = two_layer_affine();
        let region = sym_region(1.0);
        let elements = deeppoly_bounds_with_slack(&net, &region, 0.0).unwrap();
        assert_eq!(elements[1].lower, vec![-2.0]);
        assert_eq!(elements[1].upper, vec![2.0]);
        let boxes = box_propagate_with_slack(&net, &region, 0.0).unwrap();
        assert_eq!(boxes[1].lower.data(), &[-4.0]);
        assert_eq!(boxes[1].upper.data(), &[4.0]);
        // corner enumeration oracle: out = 2*x1 with x1 in {-1, 1}
        let corners: Vec<f64> = [[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]]
            .iter()
            .map(|c| net.forward(&Tensor::from_slice(c)).unwrap().data()[0])
            .collect();
        let exact_lo = corners.iter().cloned().fold(f64::INFINITY, f64::min);
        let exact_hi = corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(elements[1].lower[0], exact_lo);
        assert_eq!(elements[1].upper[0], exact_hi);
    }

    #[test]
    fn stable_positive_relu_is_identity() {
        let (ls, us, uo) = relu_relaxation(1.0, 3.0);
        assert_eq!((ls, us, uo), (1.0, 1.0, 0.0));
    }

    #[test]
    fn stable_negative_relu_is_zero() {
        let (ls, us, uo) = relu_relaxation(-3.0, -1.0);
        assert_eq!((ls, us, uo), (0.0, 0.0, 0.0));
    }

    #[test]
    fn unstable_relu_relaxation_matches_hand_formula() {
        // pre-activation in [-1, 1]: upper chord y <= 0.5 x + 0.5; the
        // area rule keeps slope 1 below since u >= -l.
        let (ls, us, uo) = relu_relaxation(-1.0, 1.0);
        assert_eq!(ls, 1.0);
        assert!((us - 0.5).abs() < 1e-15);
        assert!((uo - 0.5).abs() < 1e-15);
        // wider negative side flips the lower slope to 0
        let (ls2, _, _) = relu_relaxation(-2.0, 1.0);
        assert_eq!(ls2, 0.0);
    }

    #[test]
    fn unstable_relu_concrete_bounds() {
        let mut net = Network::compose(
            &[1],
            &[LayerSpec::Affine { out_dim: 1 }, LayerSpec::Relu],
        )
        .unwrap();
        if let Layer::Affine(a) = &mut net.layers_mut()[0] {
            a.weight.data_mut()[0] = 1.0;
        }
        let region = InputRegion::from_bounds(
            Tensor::from_slice(&[-1.0]),
            Tensor::from_slice(&[1.0]),
        )
        .unwrap();
        let elements = deeppoly_bounds_with_slack(&net, &region, 0.0).unwrap();
        assert_eq!(elements[1].lower, vec![0.0]);
        assert_eq!(elements[1].upper, vec![1.0]);
        match &elements[1].symbolic {
            SymbolicBounds::Relu { upper_slope, upper_offset, .. } => {
                assert!((upper_slope[0] - 0.5).abs() < 1e-15);
                assert!((upper_offset[0] - 0.5).abs() < 1e-15);
            }
            other => panic!("expected relu element, got {other:?}"),
        }
    }

    #[test]
    fn deeppoly_never_looser_than_box() {
        // Random small relu networks: per-neuron DeepPoly concrete bounds
        // must be contained in the Box bounds at every layer.
        for seed in 0..20u64 {
            let mut net = Network::compose(
                &[3],
                &[
                    LayerSpec::Affine { out_dim: 5 },
                    LayerSpec::Relu,
                    LayerSpec::Affine { out_dim: 4 },
                    LayerSpec::Relu,
                    LayerSpec::Affine { out_dim: 2 },
                ],
            )
            .unwrap();
            net.randomize_params(seed, 1.5);
            let region = InputRegion::linf_ball(
                &Tensor::from_slice(&[0.4, 0.5, 0.6]),
                0.1,
            )
            .unwrap();
            let elements = deeppoly_bounds(&net, &region).unwrap();
            let boxes = box_propagate(&net, &region).unwrap();
            for (k, (el, bx)) in elements.iter().zip(&boxes).enumerate() {
                for i in 0..el.lower.len() {
                    assert!(
                        el.lower[i] >= bx.lower.data()[i] - 1e-12
                            && el.upper[i] <= bx.upper.data()[i] + 1e-12,
                        "seed {seed} layer {k} neuron {i}"
                    );
                }
            }
        }
    }
}
