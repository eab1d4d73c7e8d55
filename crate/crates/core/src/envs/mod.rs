//! Environments: the N-agent differential game, the cooperative particle
//! tasks and the 3×3 coordination matrix game.
//!
//! Continuous environments expose the global state as a flat vector and take
//! one action vector per agent. Every agent receives the same reward.

mod differential;
mod matrix;
mod mpe;

pub use differential::{dg_location_metric, dg_reward, dg_transition, DifferentialGame, NoiseConfig};
pub use matrix::{
    matrix_crossover, matrix_expected_q, matrix_payoff, matrix_threshold_sweep, opponent_mix, MatrixAction, SweepRow, PAYOFF,
};
pub use mpe::{mpe_reward, pp_prey_policy, MpeEnv, MpePhysics, MpeTask, MpeTaskSpec};

use crate::SimRng;

/// Dense global state.
pub type EnvState = Vec<f64>;
/// One action vector per agent.
pub type JointAction = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    /// True exactly when the episode-length cutoff is reached.
    pub done: bool,
}

/// Axis-aligned box containing every reachable state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateBox {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl StateBox {
    pub fn uniform(dim: usize, low: f64, high: f64) -> Self {
        Self {
            low: vec![low; dim],
            high: vec![high; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn clamp(&self, state: &mut [f64]) {
        for ((x, lo), hi) in state.iter_mut().zip(&self.low).zip(&self.high) {
            *x = x.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, state: &[f64]) -> bool {
        state
            .iter()
            .zip(&self.low)
            .zip(&self.high)
            .all(|((x, lo), hi)| *x >= *lo && *x <= *hi)
    }
}

pub trait Environment: Send {
    fn name(&self) -> &str;
    fn n_agents(&self) -> usize;
    fn state_dim(&self) -> usize;
    /// Per-agent action width. Actions live in `[-1, 1]^action_dim`.
    fn action_dim(&self) -> usize;
    fn episode_length(&self) -> usize;
    fn state_bounds(&self) -> StateBox;
    fn reset(&mut self, rng: &mut SimRng) -> EnvState;
    /// Advances one joint step. Actions are clamped to `[-1, 1]` first.
    fn step(&mut self, joint: &JointAction, rng: &mut SimRng) -> StepResult;
    /// Location of the state in the task's "solved" sense, if the task has
    /// one (the differential game's location metric).
    fn progress_metric(&self, _state: &[f64]) -> Option<f64> {
        None
    }
}

pub(crate) fn clamp_action(a: f64) -> f64 {
    a.clamp(-1.0, 1.0)
}
