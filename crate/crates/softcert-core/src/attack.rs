//! FGSM and PGD adversarial example generation under an L∞ budget.
//!
//! Both attacks maximize the classification loss. Outputs always stay
//! inside the ε-ball around the clean input and inside the `[0, 1]` pixel
//! range; the two projections are axis-aligned, so their order does not
//! matter (we project onto the ball first, then clamp).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{LabeledSample, Network};
use crate::rng::{rng_for, stream};
use crate::tensor::Tensor;

/// Attack hyper-parameters. Outputs are clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    /// L∞ radius in pixel units.
    pub epsilon: f64,
    /// Per-iteration step size.
    pub alpha: f64,
    /// Number of PGD iterations; zero returns the start point.
    pub steps: usize,
    /// Start from a uniform random point in the ball instead of the input.
    pub random_start: bool,
}

impl AttackConfig {
    pub fn new(epsilon: f64, alpha: f64, steps: usize, random_start: bool) -> Result<Self> {
        let cfg = AttackConfig { epsilon, alpha, steps, random_start };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }

    /// A do-nothing attack configuration (zero budget, zero steps).
    pub fn disabled() -> Self {
        AttackConfig { epsilon: 0.0, alpha: 1.0, steps: 0, random_start: false }
    }
}

/// sign with `sign(0) = 0`, so zero-gradient coordinates do not move.
#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Fast gradient sign method: `clamp(x + ε · sign(∇x L), 0, 1)`.
pub fn fgsm(network: &Network, sample: &LabeledSample, epsilon: f64) -> Result<Tensor> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::config(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let (_, grad) = network.loss_and_input_grad(&sample.input, sample.label)?;
    let mut adv = sample.input.clone();
    for (x, g) in adv.data_mut().iter_mut().zip(grad.data()) {
        *x = (*x + epsilon * sign(*g)).clamp(0.0, 1.0);
    }
    Ok(adv)
}

/// Interval `[max(x-ε, floor), min(x+ε, ceil)]` per coordinate.
fn ball_bounds(x: &[f64], epsilon: f64, range: Option<(f64, f64)>) -> (Vec<f64>, Vec<f64>) {
    let (floor, ceil) = range.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let lo: Vec<f64> = x.iter().map(|&v| (v - epsilon).max(floor)).collect();
    let hi: Vec<f64> = x.iter().map(|&v| (v + epsilon).min(ceil)).collect();
    (lo, hi)
}

/// The projected-gradient iteration over an arbitrary gradient oracle.
/// `range` is the value clamp (`[0,1]` for images, `None` for free scalar
/// domains in tests).
fn pgd_iterate(
    x0: &[f64],
    epsilon: f64,
    alpha: f64,
    steps: usize,
    range: Option<(f64, f64)>,
    random_start: Option<&mut ChaCha8Rng>,
    mut grad: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let (lo, hi) = ball_bounds(x0, epsilon, range);
    let mut x = x0.to_vec();
    if let Some(rng) = random_start {
        if epsilon > 0.0 {
            for ((v, &l), &h) in x.iter_mut().zip(&lo).zip(&hi) {
                let u: f64 = rng.random_range(-epsilon..=epsilon);
                *v = (*v + u).clamp(l, h);
            }
        }
    }
    for _ in 0..steps {
        let g = grad(&x)?;
        for (((v, &gi), &l), &h) in x.iter_mut().zip(&g).zip(&lo).zip(&hi) {
            *v = (*v + alpha * sign(gi)).clamp(l, h);
        }
    }
    Ok(x)
}

/// Projected gradient descent on the classification loss:
/// `x_{t+1} = Π_{B∞(x,ε) ∩ [0,1]}(x_t + α · sign(∇x L))`.
///
/// `seed` drives the random start; with `random_start = false` the attack
/// is fully deterministic and the seed is unused.
pub fn pgd(
    network: &Network,
    sample: &LabeledSample,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<Tensor> {
    cfg.validate()?;
    if cfg.epsilon == 0.0 {
        return Ok(sample.input.clone());
    }
    let mut rng = cfg.random_start.then(|| rng_for(seed, stream::ATTACK, &[]));
    let shape = sample.input.shape().to_vec();
    let result = pgd_iterate(
        sample.input.data(),
        cfg.epsilon,
        cfg.alpha,
        cfg.steps,
        Some((0.0, 1.0)),
        rng.as_mut(),
        |x| {
            let xt = Tensor::new(shape.clone(), x.to_vec())?;
            Ok(network.loss_and_input_grad(&xt, sample.label)?.1.into_data())
        },
    )?;
    Tensor::new(shape, result)
}
