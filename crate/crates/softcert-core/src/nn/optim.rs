//! Stochastic gradient descent with classical momentum.

use crate::error::{Error, Result};
use crate::nn::layer::Layer;
use crate::nn::network::{Gradients, Network};

/// SGD with momentum. The optimizer owns the velocity state, which
/// persists across steps: `v <- momentum * v + g`, `w <- w - lr * v`.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    lr: f64,
    momentum: f64,
    velocity: Option<Gradients>,
}

impl SgdMomentum {
    /// `lr >= 0` and `0 <= momentum < 1`. A zero learning rate performs
    /// no-op steps (useful for dry runs) while still updating velocity.
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !lr.is_finite() || lr < 0.0 {
            return Err(Error::config(format!("learning rate must be >= 0, got {lr}")));
        }
        if !momentum.is_finite() || !(0.0..1.0).contains(&momentum) {
            return Err(Error::config(format!(
                "momentum must be in [0, 1), got {momentum}"
            )));
        }
        Ok(SgdMomentum { lr, momentum, velocity: None })
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    /// Current velocity, if any step has run.
    pub fn velocity(&self) -> Option<&Gradients> {
        self.velocity.as_ref()
    }

    /// Apply one update to `network` from accumulated gradients.
    pub fn step(&mut self, network: &mut Network, grads: &Gradients) -> Result<()> {
        let velocity = match &mut self.velocity {
            Some(v) => v,
            None => {
                self.velocity = Some(Gradients::zeros_like(network));
                self.velocity.as_mut().expect("just set")
            }
        };
        if velocity.num_layers() != grads.num_layers() {
            return Err(Error::config("gradient layout does not match optimizer state"));
        }
        for (i, layer) in network.layers_mut().iter_mut().enumerate() {
            let (weight, bias) = match layer {
                Layer::Affine(a) => (&mut a.weight, &mut a.bias),
                Layer::Conv(c) => (&mut c.weight, &mut c.bias),
                _ => continue,
            };
            let g = grads
                .layer(i)
                .ok_or_else(|| Error::config(format!("missing gradient for layer {i}")))?;
            let v = velocity.layer_mut(i).expect("velocity mirrors network layout");
            if g.weight.shape() != weight.shape() || g.bias.shape() != bias.shape() {
                return Err(Error::config(format!("gradient shape mismatch at layer {i}")));
            }
            for ((w, vel), grad) in weight
                .data_mut()
                .iter_mut()
                .zip(v.weight.data_mut())
                .zip(g.weight.data())
            {
                *vel = self.momentum * *vel + grad;
                *w -= self.lr * *vel;
            }
            for ((b, vel), grad) in bias
                .data_mut()
                .iter_mut()
                .zip(v.bias.data_mut())
                .zip(g.bias.data())
            {
                *vel = self.momentum * *vel + grad;
                *b -= self.lr * *vel;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::LayerSpec;
    use crate::tensor::Tensor;

    fn scalar_net(w: f64) -> Network {
        let mut net = Network::compose(&[1], &[LayerSpec::Affine { out_dim: 1 }]).unwrap();
        if let Layer::Affine(a) = &mut net.layers_mut()[0] {
            a.weight.data_mut()[0] = w;
        }
        net
    }

    fn grad_of(net: &Network, w_grad: f64) -> Gradients {
        let mut g = Gradients::zeros_like(net);
        g.layer_mut(0).unwrap().weight.data_mut()[0] = w_grad;
        g
    }

    fn weight_of(net: &Network) -> f64 {
        net.layers()[0].weight().unwrap().data()[0]
    }

    #[test]
    fn plain_sgd_step() {
        // w=1, g=2, lr=0.1, momentum=0 -> w=0.8
        let mut net = scalar_net(1.0);
        let mut opt = SgdMomentum::new(0.1, 0.0).unwrap();
        let g = grad_of(&net, 2.0);
        opt.step(&mut net, &g).unwrap();
        assert!((weight_of(&net) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut net = scalar_net(1.5);
        let mut opt = SgdMomentum::new(123.0, 0.0).unwrap();
        let g = grad_of(&net, 0.0);
        opt.step(&mut net, &g).unwrap();
        assert_eq!(weight_of(&net), 1.5);
    }

    #[test]
    fn momentum_accumulates_velocity() {
        // momentum=0.9, prior v=1 (from a g=1 step), then g=1:
        // v = 0.9*1 + 1 = 1.9 and w decreases by lr*v = 0.19
        let mut net = scalar_net(0.0);
        let mut opt = SgdMomentum::new(0.1, 0.9).unwrap();
        let g = grad_of(&net, 1.0);
        opt.step(&mut net, &g).unwrap(); // v = 1.0
        let before = weight_of(&net);
        opt.step(&mut net, &g).unwrap(); // v = 1.9
        let delta = before - weight_of(&net);
        assert!((delta - 0.19).abs() < 1e-15);
        let v = opt.velocity().unwrap().layer(0).unwrap().weight.data()[0];
        assert!((v - 1.9).abs() < 1e-15);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut net = scalar_net(1.0);
        let other = Network::compose(&[2], &[LayerSpec::Affine { out_dim: 2 }]).unwrap();
        let g = Gradients::zeros_like(&other);
        let mut opt = SgdMomentum::new(0.1, 0.0).unwrap();
        assert!(matches!(opt.step(&mut net, &g), Err(Error::Config(_))));
        let _ = Tensor::zeros(&[1]);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(SgdMomentum::new(-0.1, 0.0).is_err());
        assert!(SgdMomentum::new(0.1, 1.0).is_err());
        assert!(SgdMomentum::new(0.1, -0.2).is_err());
        assert!(SgdMomentum::new(0.0, 0.0).is_ok());
    }
}
