//! Fully connected ReLU networks with hand-written backprop.
//!
//! Every learned function in the crate (critic, actor, quantile and Gaussian
//! forward models, reward model) is a [`FeedForwardNet`]. Inputs are batched
//! row-wise: a batch of `n` inputs is an `n × in` matrix.

mod adam;
mod loss;

pub use adam::Adam;
pub use loss::{loss_gaussian_nll, loss_pinball, DimReduction, LossHead, LOGVAR_MAX, LOGVAR_MIN};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid_config, shape, Error, Result};

/// Weight matrix (`out × in`) and bias of one dense layer. Also used as the
/// gradient container, so gradients are shape-congruent by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OutputActivation {
    Linear,
    /// `scale · tanh(z)`; used by actors to keep actions in `[-scale, scale]`.
    Tanh { scale: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedForwardNet {
    layer_sizes: Vec<usize>,
    layers: Vec<Layer>,
    output: OutputActivation,
}

/// Per-parameter gradients of a scalar loss, plus the gradient with respect
/// to the network input (one row per batch element).
#[derive(Clone, Debug)]
pub struct GradientBundle {
    pub layers: Vec<Layer>,
    pub input: Array2<f64>,
}

impl GradientBundle {
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
        self.input *= factor;
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Activations kept from a forward pass for the backward pass.
struct Trace {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl FeedForwardNet {
    /// Xavier-uniform weights, zero biases, linear output.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(invalid_config(format!(
                "a network needs at least 2 layer sizes, got {}",
                layer_sizes.len()
            )));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(invalid_config(format!(
                "layer sizes must be positive: {layer_sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut layer = Layer::zeros(fan_in, fan_out);
                layer
                    .weight
                    .mapv_inplace(|_| rng.random_range(-bound..=bound));
                layer
            })
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            output: OutputActivation::Linear,
        })
    }

    pub fn with_output(mut self, output: OutputActivation) -> Self {
        self.output = output;
        self
    }

    /// Builds a net from explicit layers, checking that consecutive shapes
    /// chain.
    pub fn from_layers(layers: Vec<Layer>, output: OutputActivation) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid_config("a network needs at least one layer"));
        }
        let mut sizes = vec![layers[0].weight.ncols()];
        for (k, l) in layers.iter().enumerate() {
            let (rows, cols) = l.weight.dim();
            if cols != *sizes.last().unwrap() || l.bias.len() != rows {
                return Err(shape(format!(
                    "layer {k}: weight {rows}x{cols}, bias {}, expected input {}",
                    l.bias.len(),
                    sizes.last().unwrap()
                )));
            }
            sizes.push(rows);
        }
        Ok(Self {
            layer_sizes: sizes,
            layers,
            output,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// All parameters, layer by layer, weights (row-major) before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    pub fn same_architecture(&self, other: &Self) -> bool {
        self.layer_sizes == other.layer_sizes
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weight.iter().all(|w| w.is_finite()) && l.bias.iter().all(|b| b.is_finite())
        })
    }

    /// Single-input forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| shape(e.to_string()))?;
        Ok(self.forward_batch(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight.t());
            z += &layer.bias;
            if k < last {
                z.mapv_inplace(relu);
            } else {
                self.apply_output(&mut z);
            }
            h = z;
        }
        Ok(h)
    }

    /// Scalar loss and its gradients for a batch `x` under `head`.
    pub fn backward(&self, x: ArrayView2<f64>, head: &LossHead) -> Result<(f64, GradientBundle)> {
        let trace = self.trace(x)?;
        let (loss, d_out) = head.evaluate(trace.output.view())?;
        let grads = self.backprop(&trace, d_out)?;
        Ok((loss, grads))
    }

    /// Backprop an arbitrary upstream gradient `d_out = ∂L/∂y` (one row per
    /// batch element) through the net.
    pub fn backward_from(&self, x: ArrayView2<f64>, d_out: Array2<f64>) -> Result<GradientBundle> {
        let trace = self.trace(x)?;
        self.backprop(&trace, d_out)
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn apply_output(&self, z: &mut Array2<f64>) {
        if let OutputActivation::Tanh { scale } = self.output {
            z.mapv_inplace(|v| scale * v.tanh());
        }
    }

    fn trace(&self, x: ArrayView2<f64>) -> Result<Trace> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight.t());
            z += &layer.bias;
            if k < last {
                z.mapv_inplace(relu);
            } else {
                self.apply_output(&mut z);
            }
            inputs.push(std::mem::replace(&mut h, z));
        }
        Ok(Trace { inputs, output: h })
    }

    fn backprop(&self, trace: &Trace, mut delta: Array2<f64>) -> Result<GradientBundle> {
        if delta.dim() != trace.output.dim() {
            return Err(shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                delta.dim(),
                trace.output.dim()
            )));
        }
        if let OutputActivation::Tanh { scale } = self.output {
            delta.zip_mut_with(&trace.output, |d, &y| {
                let t = y / scale;
                *d *= scale * (1.0 - t * t);
            });
        }
        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        for k in (0..self.layers.len()).rev() {
            let a_in = &trace.inputs[k];
            grads[k].weight = delta.t().dot(a_in);
            grads[k].bias = delta.sum_axis(Axis(0));
            let mut d_in = delta.dot(&self.layers[k].weight);
            if k > 0 {
                // ReLU derivative, read off the post-activation input.
                d_in.zip_mut_with(a_in, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            delta = d_in;
        }
        Ok(GradientBundle {
            layers: grads,
            input: delta,
        })
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn flatten_layers(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weight.iter());
        out.extend(l.bias.iter());
    }
    out
}

/// `target ← (1 − mix)·target + mix·online`, parameter-wise.
pub fn soft_update(target: &mut FeedForwardNet, online: &FeedForwardNet, mix: f64) -> Result<()> {
    if !(mix > 0.0 && mix <= 1.0) {
        return Err(invalid_config(format!("soft-update mix must be in (0, 1], got {mix}")));
    }
    if !target.same_architecture(online) {
        return Err(shape(format!(
            "soft update between {:?} and {:?}",
            target.layer_sizes, online.layer_sizes
        )));
    }
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        t.weight.zip_mut_with(&o.weight, |a, &b| *a = (1.0 - mix) * *a + mix * b);
        t.bias.zip_mut_with(&o.bias, |a, &b| *a = (1.0 - mix) * *a + mix * b);
    }
    Ok(())
}

/// Stacks rows of equal length into a matrix.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    let mut flat = Vec::with_capacity(rows.len() * cols);
    for r in rows {
        if r.len() != cols {
            return Err(Error::Shape(format!("ragged rows: {} vs {cols}", r.len())));
        }
        flat.extend_from_slice(r);
    }
    Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| shape(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_bad_layer_sizes() {
        assert!(matches!(FeedForwardNet::new(&[], 0), Err(Error::InvalidConfig(_))));
        assert!(matches!(FeedForwardNet::new(&[3], 0), Err(Error::InvalidConfig(_))));
        assert!(matches!(FeedForwardNet::new(&[3, 0, 1], 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn init_zero_bias_and_xavier_bound() {
        let net = FeedForwardNet::new(&[2, 1], 11).unwrap();
        assert_eq!(net.layers()[0].bias[0], 0.0);

        let net = FeedForwardNet::new(&[3, 8, 2], 5).unwrap();
        let bound = (6.0f64 / 11.0).sqrt();
        assert!(net.layers()[0].weight.iter().all(|w| w.abs() <= bound));
        assert!(net.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn init_is_deterministic() {
        let a = FeedForwardNet::new(&[4, 256, 256, 1], 7).unwrap();
        let b = FeedForwardNet::new(&[4, 256, 256, 1], 7).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
        let c = FeedForwardNet::new(&[4, 256, 256, 1], 8).unwrap();
        assert_ne!(a.flat_params(), c.flat_params());
    }

    #[test]
    fn zero_net_outputs_zero() {
        let mut net = FeedForwardNet::new(&[3, 5, 2], 1).unwrap();
        let zeros = vec![0.0; net.param_count()];
        net.set_flat_params(&zeros).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn affine_identity_case() {
        let layer = Layer {
            weight: array![[2.0]],
            bias: array![1.0],
        };
        let net = FeedForwardNet::from_layers(vec![layer], OutputActivation::Linear).unwrap();
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn forward_matches_hand_rolled_evaluation() {
        let net = FeedForwardNet::new(&[3, 4, 2], 99).unwrap();
        let x = [0.3, -1.2, 0.7];
        let mut h: Vec<f64> = x.to_vec();
        for (k, l) in net.layers().iter().enumerate() {
            let mut next = vec![0.0; l.bias.len()];
            for (r, out) in next.iter_mut().enumerate() {
                let mut acc = l.bias[r];
                for (c, hv) in h.iter().enumerate() {
                    acc += l.weight[[r, c]] * hv;
                }
                *out = if k + 1 < net.layers().len() { acc.max(0.0) } else { acc };
            }
            h = next;
        }
        let y = net.forward(&x).unwrap();
        for (a, b) in y.iter().zip(&h) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let net = FeedForwardNet::new(&[3, 2], 0).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn soft_update_cases() {
        let online = FeedForwardNet::new(&[2, 3, 1], 1).unwrap();
        let mut target = FeedForwardNet::new(&[2, 3, 1], 2).unwrap();
        soft_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target.flat_params(), online.flat_params());

        let one = Layer { weight: array![[1.0]], bias: array![1.0] };
        let zero = Layer { weight: array![[0.0]], bias: array![0.0] };
        let online = FeedForwardNet::from_layers(vec![one], OutputActivation::Linear).unwrap();
        let mut target = FeedForwardNet::from_layers(vec![zero], OutputActivation::Linear).unwrap();
        soft_update(&mut target, &online, 0.01).unwrap();
        assert!((target.layers()[0].weight[[0, 0]] - 0.01).abs() < 1e-15);

        let mut gap = 1.0 - 0.01;
        for _ in 0..50 {
            let before = 1.0 - target.layers()[0].weight[[0, 0]];
            soft_update(&mut target, &online, 0.01).unwrap();
            let after = 1.0 - target.layers()[0].weight[[0, 0]];
            assert!((after - 0.99 * before).abs() < 1e-12);
            gap = after;
        }
        assert!(gap < 0.99f64.powi(50));

        let other = FeedForwardNet::new(&[2, 4, 1], 0).unwrap();
        let mut t = FeedForwardNet::new(&[2, 3, 1], 0).unwrap();
        assert!(matches!(soft_update(&mut t, &other, 0.5), Err(Error::Shape(_))));
        let same = t.clone();
        assert!(soft_update(&mut t, &same, 0.0).is_err());
    }

    #[test]
    fn flat_params_round_trip() {
        let mut net = FeedForwardNet::new(&[2, 3, 2], 4).unwrap();
        let p: Vec<f64> = (0..net.param_count()).map(|i| i as f64).collect();
        net.set_flat_params(&p).unwrap();
        assert_eq!(net.flat_params(), p);
        assert!(net.set_flat_params(&p[1..]).is_err());
    }
}
