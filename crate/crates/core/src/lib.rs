//! Decentralized multi-agent reinforcement learning lab.
//!
//! Independent learners that each see the global state but only their own
//! action. The centrepiece is the MaxMax Q-learning agent ([`agent`]), which
//! brackets the next state with a pair of quantile models, samples candidate
//! next states from that bracket and bootstraps from the best of them. It is
//! compared against independent and hysteretic DDPG ([`baselines`]) on the
//! differential game and the cooperative particle tasks ([`envs`]).
//! [`theory`] checks the operator properties the method rests on by brute
//! force on finite MDPs, and [`harness`] runs seeded experiments.

pub mod agent;
pub mod baselines;
pub mod envs;
pub mod error;
pub mod harness;
pub mod nn;
pub mod par;
pub mod theory;

pub use error::{Error, Result};

/// Generator used for every stochastic component. ChaCha keeps streams
/// identical across platforms.
pub type SimRng = rand_chacha::ChaCha8Rng;
