//! Next-state models: a pair of quantile regressors bracketing each state
//! dimension, or a diagonal Gaussian. Both propose candidate next states.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::actor_critic::{concat_cols, layer_sizes};
use super::replay::Batch;
use crate::envs::StateBox;
use crate::error::{Error, Result};
use crate::nn::{Adam, DimReduction, FeedForwardNet, LossHead, LOGVAR_MAX, LOGVAR_MIN};
use crate::SimRng;

/// Two-sided standard-normal quantile for a central 90% interval, matching
/// the 0.05/0.95 quantile pair.
const GAUSSIAN_Z90: f64 = 1.6448536269514722;

/// Per-dimension bracket for one `(s, a_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileBoundPair {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl QuantileBoundPair {
    /// Swaps crossed dimensions so `lower ≤ upper`.
    pub fn reordered(mut self) -> Self {
        for (l, u) in self.lower.iter_mut().zip(self.upper.iter_mut()) {
            if *l > *u {
                std::mem::swap(l, u);
            }
        }
        self
    }
}

/// Network estimating the `level`-quantile of each next-state dimension.
#[derive(Clone, Debug)]
pub struct QuantileModel {
    pub net: FeedForwardNet,
    opt: Adam,
    level: f64,
    reduction: DimReduction,
}

impl QuantileModel {
    pub fn new(net: FeedForwardNet, level: f64, lr: f64, reduction: DimReduction) -> Self {
        Self {
            opt: Adam::new(&net, lr),
            net,
            level,
            reduction,
        }
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// One Adam step of quantile regression toward `targets`.
    ///
    /// [`crate::nn::loss_pinball`] charges over-prediction at its `tau`, so
    /// the level-`q` estimate is trained with `tau = 1 − q`.
    pub fn train_step(&mut self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
        if inputs.nrows() == 0 {
            return Ok(0.0);
        }
        let head = LossHead::Pinball {
            tau: 1.0 - self.level,
            targets,
            reduction: self.reduction,
        };
        let (loss, grads) = self.net.backward(inputs, &head)?;
        self.opt.step(&mut self.net, &grads)?;
        Ok(loss)
    }
}

#[derive(Clone, Debug)]
pub struct GaussianModel {
    pub net: FeedForwardNet,
    opt: Adam,
    state_dim: usize,
}

impl GaussianModel {
    pub fn train_step(&mut self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
        if inputs.nrows() == 0 {
            return Ok(0.0);
        }
        let (loss, grads) = self.net.backward(inputs, &LossHead::GaussianNll { targets })?;
        self.opt.step(&mut self.net, &grads)?;
        Ok(loss)
    }

    /// Per-row mean and standard deviation.
    pub fn predict(&self, inputs: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let out = self.net.forward_batch(inputs)?;
        let d = self.state_dim;
        let mean = out.slice(ndarray::s![.., ..d]).to_owned();
        let std = out
            .slice(ndarray::s![.., d..])
            .mapv(|lv| (0.5 * lv.clamp(LOGVAR_MIN, LOGVAR_MAX)).exp());
        Ok((mean, std))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ForwardModelKind {
    #[default]
    Quantile,
    Gaussian,
}

impl ForwardModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "quantile" => Ok(Self::Quantile),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::InvalidConfig(format!("unknown forward model `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Quantile => "quantile",
            Self::Gaussian => "gaussian",
        }
    }
}

#[derive(Clone, Debug)]
pub enum ForwardModel {
    Quantile { lower: QuantileModel, upper: QuantileModel },
    Gaussian(GaussianModel),
}

/// Candidate next states for a batch. Rows `k·(M+1) .. (k+1)·(M+1)` belong
/// to batch element `k`: `M` samples followed by the observed next state.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    pub states: Array2<f64>,
    pub per_sample: usize,
    /// Percentage of observed next-state dims inside the predicted bracket.
    pub coverage: f64,
    pub mean_width: f64,
}

pub struct ForwardModelSpec<'a> {
    pub kind: ForwardModelKind,
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: &'a [usize],
    pub tau_lower: f64,
    pub tau_upper: f64,
    pub lr: f64,
    pub reduction: DimReduction,
}

impl ForwardModel {
    pub fn new(spec: &ForwardModelSpec, seed: u64) -> Result<Self> {
        let input = spec.state_dim + spec.action_dim;
        Ok(match spec.kind {
            ForwardModelKind::Quantile => {
                let sizes = layer_sizes(input, spec.hidden, spec.state_dim);
                let lower = FeedForwardNet::new(&sizes, seed)?;
                let upper = FeedForwardNet::new(&sizes, seed.wrapping_add(1))?;
                Self::Quantile {
                    lower: QuantileModel::new(lower, spec.tau_lower, spec.lr, spec.reduction),
                    upper: QuantileModel::new(upper, spec.tau_upper, spec.lr, spec.reduction),
                }
            }
            ForwardModelKind::Gaussian => {
                let net = FeedForwardNet::new(&layer_sizes(input, spec.hidden, 2 * spec.state_dim), seed)?;
                Self::Gaussian(GaussianModel {
                    opt: Adam::new(&net, spec.lr),
                    net,
                    state_dim: spec.state_dim,
                })
            }
        })
    }

    /// One training step on the batch. Returns the two quantile losses, or
    /// the Gaussian NLL twice.
    pub fn update(&mut self, batch: &Batch) -> Result<(f64, f64)> {
        if batch.is_empty() {
            return Ok((0.0, 0.0));
        }
        let x = concat_cols(batch.states.view(), batch.actions.view());
        match self {
            Self::Quantile { lower, upper } => {
                let l = lower.train_step(x.view(), batch.next_states.view())?;
                let u = upper.train_step(x.view(), batch.next_states.view())?;
                Ok((l, u))
            }
            Self::Gaussian(g) => {
                let l = g.train_step(x.view(), batch.next_states.view())?;
                Ok((l, l))
            }
        }
    }

    /// Reordered per-dimension bracket for each row of `(states, actions)`.
    /// For the Gaussian model this is the central 90% interval.
    pub fn bounds(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let x = concat_cols(states, actions);
        match self {
            Self::Quantile { lower, upper } => {
                let mut lo = lower.net.forward_batch(x.view())?;
                let mut hi = upper.net.forward_batch(x.view())?;
                ndarray::Zip::from(&mut lo).and(&mut hi).for_each(|l, u| {
                    if *l > *u {
                        std::mem::swap(l, u);
                    }
                });
                Ok((lo, hi))
            }
            Self::Gaussian(g) => {
                let (mean, std) = g.predict(x.view())?;
                Ok((&mean - &(&std * GAUSSIAN_Z90), &mean + &(&std * GAUSSIAN_Z90)))
            }
        }
    }

    pub fn bound_pair(&self, state: &[f64], action: &[f64]) -> Result<QuantileBoundPair> {
        let s = ArrayView2::from_shape((1, state.len()), state).map_err(|e| Error::Shape(e.to_string()))?;
        let a = ArrayView2::from_shape((1, action.len()), action).map_err(|e| Error::Shape(e.to_string()))?;
        let (lo, hi) = self.bounds(s, a)?;
        Ok(QuantileBoundPair {
            lower: lo.row(0).to_vec(),
            upper: hi.row(0).to_vec(),
        })
    }

    /// Candidate sets for every batch element.
    pub fn candidates(&self, batch: &Batch, m: usize, bounds: &StateBox, rng: &mut SimRng) -> Result<CandidateSet> {
        let n = batch.len();
        let d = batch.states.ncols();
        let per = m + 1;
        let mut out = Array2::zeros((n * per, d));
        let (lo, hi) = self.bounds(batch.states.view(), batch.actions.view())?;
        let coverage = if n > 0 {
            coverage_statistic(lo.view(), hi.view(), batch.next_states.view())?
        } else {
            0.0
        };
        let mean_width = if n > 0 { (&hi - &lo).mean().unwrap_or(0.0) } else { 0.0 };
        let gaussian = match self {
            Self::Gaussian(g) => {
                let x = concat_cols(batch.states.view(), batch.actions.view());
                Some(g.predict(x.view())?)
            }
            Self::Quantile { .. } => None,
        };
        for k in 0..n {
            let truth = batch.next_states.row(k);
            let cands = match &gaussian {
                None => sample_from_bounds(
                    &QuantileBoundPair {
                        lower: lo.row(k).to_vec(),
                        upper: hi.row(k).to_vec(),
                    },
                    truth.as_slice().unwrap_or(&truth.to_vec()),
                    m,
                    bounds,
                    rng,
                ),
                Some((mean, std)) => sample_gaussian(
                    mean.row(k).as_slice().unwrap(),
                    std.row(k).as_slice().unwrap(),
                    &truth.to_vec(),
                    m,
                    bounds,
                    rng,
                ),
            };
            for (j, c) in cands.iter().enumerate() {
                out.row_mut(k * per + j).assign(&ndarray::ArrayView1::from(c.as_slice()));
            }
        }
        Ok(CandidateSet {
            states: out,
            per_sample: per,
            coverage,
            mean_width,
        })
    }

    pub(crate) fn nets(&self) -> Vec<(&'static str, &FeedForwardNet)> {
        match self {
            Self::Quantile { lower, upper } => vec![("quantile_lower", &lower.net), ("quantile_upper", &upper.net)],
            Self::Gaussian(g) => vec![("gaussian", &g.net)],
        }
    }

    pub(crate) fn nets_mut(&mut self) -> Vec<(&'static str, &mut FeedForwardNet)> {
        match self {
            Self::Quantile { lower, upper } => {
                vec![("quantile_lower", &mut lower.net), ("quantile_upper", &mut upper.net)]
            }
            Self::Gaussian(g) => vec![("gaussian", &mut g.net)],
        }
    }
}

/// `M` states drawn uniformly inside the (reordered) bracket, clamped to the
/// state box, followed by the observed next state.
pub fn sample_from_bounds(
    bounds: &QuantileBoundPair,
    true_next: &[f64],
    m: usize,
    state_box: &StateBox,
    rng: &mut SimRng,
) -> Vec<Vec<f64>> {
    let b = bounds.clone().reordered();
    let mut out = Vec::with_capacity(m + 1);
    for _ in 0..m {
        let mut c: Vec<f64> = b
            .lower
            .iter()
            .zip(&b.upper)
            .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect();
        state_box.clamp(&mut c);
        out.push(c);
    }
    out.push(true_next.to_vec());
    out
}

/// `M` draws from `N(mean_d, std_d²)` per dimension, clamped, followed by the
/// observed next state.
pub fn sample_gaussian(
    mean: &[f64],
    std: &[f64],
    true_next: &[f64],
    m: usize,
    state_box: &StateBox,
    rng: &mut SimRng,
) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(m + 1);
    for _ in 0..m {
        let mut c: Vec<f64> = mean
            .iter()
            .zip(std)
            .map(|(mu, sd)| mu + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        state_box.clamp(&mut c);
        out.push(c);
    }
    out.push(true_next.to_vec());
    out
}

/// `100 · P / (n·D)` where `P` counts dims with `lower ≤ truth ≤ upper`.
pub fn coverage_statistic(lower: ArrayView2<f64>, upper: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("coverage of an empty batch".into()));
    }
    if lower.dim() != truth.dim() || upper.dim() != truth.dim() {
        return Err(Error::Shape(format!(
            "bounds {:?}/{:?} vs truth {:?}",
            lower.dim(),
            upper.dim(),
            truth.dim()
        )));
    }
    let mut inside = 0usize;
    ndarray::Zip::from(&lower).and(&upper).and(&truth).for_each(|l, u, t| {
        if *l <= *t && *t <= *u {
            inside += 1;
        }
    });
    Ok(100.0 * inside as f64 / truth.len() as f64)
}
