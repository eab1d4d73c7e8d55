use crate::error::{shape, Error, Result};

use super::{FeedForwardNet, GradientBundle, Layer};

/// Bias-corrected Adam with one moment pair per network parameter.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Layer>,
    v: Vec<Layer>,
}

impl Adam {
    pub fn new(net: &FeedForwardNet, lr: f64) -> Self {
        let zeros: Vec<Layer> = net.layers().iter().map(Layer::zeros_like).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut FeedForwardNet, grads: &GradientBundle) -> Result<()> {
        if grads.layers.len() != net.layers().len() || self.m.len() != net.layers().len() {
            return Err(shape("gradient/optimizer layer count differs from network"));
        }
        for (g, l) in grads.layers.iter().zip(net.layers()) {
            if g.weight.dim() != l.weight.dim() || g.bias.dim() != l.bias.dim() {
                return Err(shape("gradient shape differs from network"));
            }
        }
        if grads
            .layers
            .iter()
            .any(|g| g.weight.iter().chain(g.bias.iter()).any(|v| !v.is_finite()))
        {
            return Err(Error::NumericFailure(format!(
                "non-finite gradient at optimizer step {}",
                self.t + 1
            )));
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powf(self.t as f64);
        let c2 = 1.0 - b2.powf(self.t as f64);
        let (lr, eps) = (self.lr, self.eps);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((layer, g), m), v) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            ndarray::Zip::from(&mut layer.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .and(&g.weight)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            ndarray::Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        if !net.is_finite() {
            return Err(Error::NumericFailure(format!(
                "non-finite parameter after optimizer step {}",
                self.t
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn zero_grads(net: &FeedForwardNet) -> GradientBundle {
        GradientBundle {
            layers: net.layers().iter().map(Layer::zeros_like).collect(),
            input: Array2::zeros((0, net.input_dim())),
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut net = FeedForwardNet::new(&[2, 3, 1], 3).unwrap();
        let before = net.flat_params();
        let mut adam = Adam::new(&net, 1e-3);
        let g = zero_grads(&net);
        adam.step(&mut net, &g).unwrap();
        assert_eq!(net.flat_params(), before);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut net = FeedForwardNet::new(&[2, 3, 1], 3).unwrap();
        let before = net.flat_params();
        let mut g = zero_grads(&net);
        for l in &mut g.layers {
            l.weight.fill(0.37);
            l.bias.fill(-2.5);
        }
        let mut adam = Adam::new(&net, 1e-3);
        adam.step(&mut net, &g).unwrap();
        // At t=1 the corrected moments are g and g², so the step is lr·g/(|g|+eps).
        let gflat = g.flatten();
        for ((a, b), gv) in net.flat_params().iter().zip(&before).zip(&gflat) {
            let expected = b - 1e-3 * gv / (gv.abs() + 1e-8);
            assert!((a - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn nan_gradient_is_numeric_failure() {
        let mut net = FeedForwardNet::new(&[2, 1], 3).unwrap();
        let mut g = zero_grads(&net);
        g.layers[0].bias[0] = f64::NAN;
        let mut adam = Adam::new(&net, 1e-3);
        assert!(matches!(adam.step(&mut net, &g), Err(Error::NumericFailure(_))));
    }

    #[test]
    fn deterministic_updates() {
        let run = || {
            let mut net = FeedForwardNet::new(&[2, 4, 1], 9).unwrap();
            let mut adam = Adam::new(&net, 1e-3);
            let mut g = zero_grads(&net);
            for l in &mut g.layers {
                l.weight.fill(0.1);
            }
            adam.step(&mut net, &g).unwrap();
            adam.step(&mut net, &g).unwrap();
            net.flat_params()
        };
        assert_eq!(run(), run());
    }
}
