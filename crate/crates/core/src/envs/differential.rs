use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{clamp_action, EnvState, Environment, JointAction, StateBox, StepResult};
use crate::error::{invalid_config, Result};
use crate::SimRng;

const OPTIMAL_AMPLITUDE: f64 = 0.5;
const SUBOPTIMAL_AMPLITUDE: f64 = 0.15;
const STEP_SCALE: f64 = 0.1;

/// Gaussian noise on the position update and on the reward. Zero disables.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiseConfig {
    pub sigma_s: f64,
    pub sigma_r: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_s >= 0.0 && self.sigma_r >= 0.0 {
            Ok(())
        } else {
            Err(invalid_config(format!("noise std must be non-negative: {self:?}")))
        }
    }
}

/// `l = sqrt((2/N) Σ x_i²)`.
pub fn dg_location_metric(positions: &[f64]) -> f64 {
    let n = positions.len().max(1) as f64;
    (2.0 / n * positions.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// Narrow optimal bump of height 1 inside `l ≤ m = 0.13(N − 1)`, zero band
/// out to 0.6, a suboptimal ring of height 0.3 peaking at `l = 0.8`.
pub fn dg_reward(l: f64, n_agents: usize) -> f64 {
    let m = 0.13 * (n_agents as f64 - 1.0);
    if l <= m {
        OPTIMAL_AMPLITUDE * ((l * PI / m).cos() + 1.0)
    } else if l <= 0.6 {
        0.0
    } else if l <= 1.0 {
        SUBOPTIMAL_AMPLITUDE * ((5.0 * PI * (l - 0.8)).cos() + 1.0)
    } else {
        0.0
    }
}

/// One transition: `x_i ← clip(x_i + 0.1 a_i + z, −1, 1)`, reward from the
/// next-state location metric.
pub fn dg_transition(
    state: &[f64],
    joint: &JointAction,
    noise: NoiseConfig,
    rng: &mut SimRng,
) -> (EnvState, f64) {
    let pos_noise = (noise.sigma_s > 0.0).then(|| Normal::new(0.0, noise.sigma_s).unwrap());
    let next: EnvState = state
        .iter()
        .zip(joint)
        .map(|(x, a)| {
            let z = pos_noise.as_ref().map_or(0.0, |d| d.sample(rng));
            (x + STEP_SCALE * clamp_action(a[0]) + z).clamp(-1.0, 1.0)
        })
        .collect();
    let mut reward = dg_reward(dg_location_metric(&next), state.len());
    if noise.sigma_r > 0.0 {
        reward += Normal::new(0.0, noise.sigma_r).unwrap().sample(rng);
    }
    (next, reward)
}

#[derive(Clone, Debug)]
pub struct DifferentialGame {
    n_agents: usize,
    episode_length: usize,
    noise: NoiseConfig,
    state: EnvState,
    t: usize,
}

impl DifferentialGame {
    pub fn new(n_agents: usize, noise: NoiseConfig) -> Result<Self> {
        if n_agents < 2 {
            return Err(invalid_config(format!(
                "differential game needs at least 2 agents, got {n_agents}"
            )));
        }
        noise.validate()?;
        Ok(Self {
            n_agents,
            episode_length: 25,
            noise,
            state: vec![0.0; n_agents],
            t: 0,
        })
    }

    pub fn with_episode_length(mut self, len: usize) -> Self {
        self.episode_length = len;
        self
    }

    pub fn noise(&self) -> NoiseConfig {
        self.noise
    }

    /// Positions i.i.d. uniform on `[-1, 1]`.
    pub fn sample_start(n_agents: usize, rng: &mut SimRng) -> EnvState {
        (0..n_agents).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }

    pub fn set_state(&mut self, state: EnvState) {
        self.state = state;
    }
}

impl Environment for DifferentialGame {
    fn name(&self) -> &str {
        "dg"
    }

    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn state_dim(&self) -> usize {
        self.n_agents
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn episode_length(&self) -> usize {
        self.episode_length
    }

    fn state_bounds(&self) -> StateBox {
        StateBox::uniform(self.n_agents, -1.0, 1.0)
    }

    fn reset(&mut self, rng: &mut SimRng) -> EnvState {
        self.t = 0;
        self.state = Self::sample_start(self.n_agents, rng);
        self.state.clone()
    }

    fn step(&mut self, joint: &JointAction, rng: &mut SimRng) -> StepResult {
        let (next, reward) = dg_transition(&self.state, joint, self.noise, rng);
        self.state = next.clone();
        self.t += 1;
        StepResult {
            next_state: next,
            reward,
            done: self.t >= self.episode_length,
        }
    }

    fn progress_metric(&self, state: &[f64]) -> Option<f64> {
        Some(dg_location_metric(state))
    }
}
