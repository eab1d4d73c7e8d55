//! The MMQ learner and the machinery it shares with the baselines: replay,
//! actor-critic networks, next-state models and exploration.

mod actor_critic;
mod forward_model;
mod mmq;
mod replay;

pub use actor_critic::ActorCritic;
pub use forward_model::{
    coverage_statistic, sample_from_bounds, sample_gaussian, CandidateSet, ForwardModel, ForwardModelKind,
    ForwardModelSpec, GaussianModel, QuantileBoundPair, QuantileModel,
};
pub use mmq::{max_over_candidates, MmqAgent};
pub use replay::{Batch, ReplayBuffer, Transition};

pub(crate) use actor_critic::{concat_cols, layer_sizes};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::envs::StateBox;
use crate::error::{Error, Result};
use crate::nn::{DimReduction, FeedForwardNet};
use crate::SimRng;

/// Shapes one decentralized agent sees.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentDims {
    pub state_dim: usize,
    pub action_dim: usize,
    pub state_box: StateBox,
}

/// How non-greedy actions are produced after the pretrain phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exploration {
    /// With probability ε replace `π(s)` by a uniform action.
    Uniform,
    /// Add `N(0, std²)` to `π(s)` and clip to `[−1, 1]`.
    Gaussian { std: f64 },
}

/// Hyperparameters shared by MMQ and the DDPG baselines.
#[derive(Clone, Debug, PartialEq)]
pub struct MmqConfig {
    /// Number of sampled candidate next states `M`.
    pub samples: usize,
    pub tau_lower: f64,
    pub tau_upper: f64,
    pub gamma: f64,
    /// Constant `c` subtracted from every stored reward.
    pub reward_shift: f64,
    pub epsilon: f64,
    pub exploration: Exploration,
    pub pretrain_steps: u64,
    /// Critic updates per actor update.
    pub critic_ratio: usize,
    pub target_mix: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub forward_model: ForwardModelKind,
    pub quantile_reduction: DimReduction,
}

impl Default for MmqConfig {
    fn default() -> Self {
        Self {
            samples: 15,
            tau_lower: 0.05,
            tau_upper: 0.95,
            gamma: 0.99,
            reward_shift: 2.0,
            epsilon: 0.1,
            exploration: Exploration::Uniform,
            pretrain_steps: 20_000,
            critic_ratio: 10,
            target_mix: 0.01,
            batch_size: 100,
            buffer_capacity: 550_000,
            lr: 1e-3,
            hidden: vec![256, 256],
            forward_model: ForwardModelKind::Quantile,
            quantile_reduction: DimReduction::Mean,
        }
    }
}

impl MmqConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.tau_lower > 0.0 && self.tau_lower < self.tau_upper && self.tau_upper < 1.0) {
            return bad("quantile levels must satisfy 0 < tau_l < tau_u < 1");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !self.reward_shift.is_finite() {
            return bad("reward shift must be finite");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if let Exploration::Gaussian { std } = self.exploration {
            if !(std >= 0.0 && std.is_finite()) {
                return bad("exploration std must be finite and nonnegative");
            }
        }
        if self.critic_ratio == 0 {
            return bad("critic ratio must be at least 1");
        }
        if !(self.target_mix > 0.0 && self.target_mix <= 1.0) {
            return bad("target mix must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch size and buffer capacity must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        Ok(())
    }
}

/// Losses and model statistics from one training trigger.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainDiagnostics {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub reward_loss: Option<f64>,
    pub quantile_losses: Option<(f64, f64)>,
    pub coverage: Option<f64>,
    pub mean_bound_width: Option<f64>,
}

/// Gradient-step counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UpdateCounters {
    pub triggers: u64,
    pub critic_updates: u64,
    pub actor_updates: u64,
}

/// A decentralized continuous-control learner.
pub trait Learner: Send {
    /// Exploratory action for the current phase.
    fn act(&mut self, state: &[f64]) -> Result<Vec<f64>>;

    /// Deterministic policy output.
    fn act_greedy(&self, state: &[f64]) -> Result<Vec<f64>>;

    /// Stores `(s, a_i, r, s')` with the raw environment reward and runs a
    /// training trigger when one is due.
    fn observe(
        &mut self,
        state: &[f64],
        action: &[f64],
        reward: f64,
        next_state: &[f64],
    ) -> Result<Option<TrainDiagnostics>>;

    fn counters(&self) -> UpdateCounters;

    /// Coverage of the next-state bracket on `batch`, for learners that have
    /// one.
    fn coverage_on(&self, _batch: &Batch) -> Result<Option<f64>> {
        Ok(None)
    }

    /// Transitions observed so far.
    fn steps_seen(&self) -> u64;

    fn buffer(&self) -> &ReplayBuffer;

    fn networks(&self) -> Vec<(&'static str, &FeedForwardNet)>;

    fn networks_mut(&mut self) -> Vec<(&'static str, &mut FeedForwardNet)>;
}

pub fn uniform_action(dim: usize, rng: &mut SimRng) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Action selection shared by all continuous learners. Returns the action and
/// whether it was drawn at random.
pub fn explore(
    ac: &ActorCritic,
    state: &[f64],
    pretraining: bool,
    epsilon: f64,
    mode: Exploration,
    rng: &mut SimRng,
) -> Result<(Vec<f64>, bool)> {
    let dim = ac.action_dim();
    if pretraining {
        return Ok((uniform_action(dim, rng), true));
    }
    match mode {
        Exploration::Uniform => {
            if epsilon > 0.0 && rng.random::<f64>() < epsilon {
                Ok((uniform_action(dim, rng), true))
            } else {
                Ok((ac.policy(state)?, false))
            }
        }
        Exploration::Gaussian { std } => {
            let mut a = ac.policy(state)?;
            for v in &mut a {
                *v = (*v + std * rng.sample::<f64, _>(StandardNormal)).clamp(-1.0, 1.0);
            }
            Ok((a, false))
        }
    }
}
