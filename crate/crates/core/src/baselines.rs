//! Decentralized comparison learners: independent DDPG, hysteretic DDPG and
//! tabular learners for the 3×3 coordination game.

use ndarray::Array1;
use rand::{Rng, SeedableRng};

use crate::agent::{
    explore, ActorCritic, AgentDims, Batch, Learner, MmqConfig, ReplayBuffer, TrainDiagnostics, Transition,
    UpdateCounters,
};
use crate::envs::{matrix_payoff, MatrixAction};
use crate::error::{Error, Result};
use crate::nn::FeedForwardNet;
use crate::SimRng;

/// Scale applied to pessimistic (negative) TD errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HystereticConfig {
    pub beta: f64,
}

impl Default for HystereticConfig {
    fn default() -> Self {
        Self { beta: 0.5 }
    }
}

impl HystereticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta > 0.0 && self.beta <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("hysteretic beta {} outside (0, 1]", self.beta)))
        }
    }
}

/// Per-sample squared-loss weights: 1 for `δ > 0`, `beta` otherwise.
pub fn hysteretic_weights(td_errors: &Array1<f64>, beta: f64) -> Vec<f64> {
    td_errors.iter().map(|d| if *d > 0.0 { 1.0 } else { beta }).collect()
}

/// Independent DDPG, optionally hysteretic. Shares replay, network shapes
/// and update cadence with MMQ but uses the observed reward directly.
#[derive(Clone, Debug)]
pub struct DdpgAgent {
    cfg: MmqConfig,
    hysteretic: Option<HystereticConfig>,
    shift_rewards: bool,
    ac: ActorCritic,
    buffer: ReplayBuffer,
    rng: SimRng,
    seen: u64,
    triggers: u64,
}

impl DdpgAgent {
    /// `shift_rewards` stores `r − cfg.reward_shift` instead of `r`.
    pub fn new(
        cfg: MmqConfig,
        dims: &AgentDims,
        hysteretic: Option<HystereticConfig>,
        shift_rewards: bool,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if let Some(h) = hysteretic {
            h.validate()?;
        }
        Ok(Self {
            ac: ActorCritic::new(dims.state_dim, dims.action_dim, &cfg.hidden, cfg.lr, seed)?,
            buffer: ReplayBuffer::new(cfg.buffer_capacity, dims.state_dim, dims.action_dim),
            rng: SimRng::seed_from_u64(seed ^ 0x6464_7067_5f61_6765),
            seen: 0,
            triggers: 0,
            hysteretic,
            shift_rewards,
            cfg,
        })
    }

    pub fn config(&self) -> &MmqConfig {
        &self.cfg
    }

    pub fn hysteretic(&self) -> Option<HystereticConfig> {
        self.hysteretic
    }

    pub fn actor_critic(&self) -> &ActorCritic {
        &self.ac
    }

    pub fn actor_critic_mut(&mut self) -> &mut ActorCritic {
        &mut self.ac
    }

    pub fn store(&mut self, t: &Transition) {
        self.buffer.push(t);
        self.seen += 1;
    }

    /// `r + γ·Q_target(s', π_target(s'))`.
    pub fn targets(&self, batch: &Batch) -> Result<Array1<f64>> {
        let v = self.ac.target_values(batch.next_states.view())?;
        Ok(&batch.rewards + &(v * self.cfg.gamma))
    }

    /// `y − Q(s, a)` per sample.
    pub fn td_errors(&self, batch: &Batch, targets: &Array1<f64>) -> Result<Array1<f64>> {
        let q = self.ac.q_values(batch.states.view(), batch.actions.view())?;
        Ok(targets - &q)
    }

    pub fn iddpg_update(&mut self, batch: &Batch) -> Result<TrainDiagnostics> {
        self.update(batch, None)
    }

    pub fn hyddpg_update(&mut self, batch: &Batch, beta: f64) -> Result<TrainDiagnostics> {
        HystereticConfig { beta }.validate()?;
        self.update(batch, Some(beta))
    }

    fn update(&mut self, batch: &Batch, beta: Option<f64>) -> Result<TrainDiagnostics> {
        if batch.is_empty() {
            return Ok(TrainDiagnostics::default());
        }
        let targets = self.targets(batch)?;
        let mut critic_loss = 0.0;
        for _ in 0..self.cfg.critic_ratio {
            let weights = match beta {
                Some(b) => Some(hysteretic_weights(&self.td_errors(batch, &targets)?, b)),
                None => None,
            };
            critic_loss =
                self.ac
                    .critic_step(batch.states.view(), batch.actions.view(), &targets, weights.as_deref())?;
        }
        let actor_loss = self.ac.actor_step(batch.states.view())?;
        self.ac.update_targets(self.cfg.target_mix)?;
        self.triggers += 1;
        Ok(TrainDiagnostics {
            critic_loss,
            actor_loss,
            ..TrainDiagnostics::default()
        })
    }

    pub fn train_step(&mut self) -> Result<Option<TrainDiagnostics>> {
        if self.seen <= self.cfg.pretrain_steps || self.buffer.is_empty() {
            return Ok(None);
        }
        let batch = self.buffer.sample(self.cfg.batch_size, &mut self.rng);
        let beta = self.hysteretic.map(|h| h.beta);
        self.update(&batch, beta).map(Some)
    }
}

impl Learner for DdpgAgent {
    fn act(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        let pre = self.seen < self.cfg.pretrain_steps;
        Ok(explore(&self.ac, state, pre, self.cfg.epsilon, self.cfg.exploration, &mut self.rng)?.0)
    }

    fn act_greedy(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.ac.policy(state)
    }

    fn observe(
        &mut self,
        state: &[f64],
        action: &[f64],
        reward: f64,
        next_state: &[f64],
    ) -> Result<Option<TrainDiagnostics>> {
        if !reward.is_finite() {
            return Err(Error::NumericFailure("non-finite reward".into()));
        }
        let stored = if self.shift_rewards { reward - self.cfg.reward_shift } else { reward };
        self.store(&Transition {
            state: state.to_vec(),
            action: action.to_vec(),
            reward: stored,
            next_state: next_state.to_vec(),
        });
        self.train_step()
    }

    fn counters(&self) -> UpdateCounters {
        UpdateCounters {
            triggers: self.triggers,
            critic_updates: self.ac.critic_updates(),
            actor_updates: self.ac.actor_updates(),
        }
    }

    fn steps_seen(&self) -> u64 {
        self.seen
    }

    fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    fn networks(&self) -> Vec<(&'static str, &FeedForwardNet)> {
        self.ac.nets().into_iter().collect()
    }

    fn networks_mut(&mut self) -> Vec<(&'static str, &mut FeedForwardNet)> {
        self.ac.nets_mut().into_iter().collect()
    }
}

/// How a tabular learner turns a sampled reward into a value update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TabularRule {
    /// `Q(a) ← Q(a) + α(r − Q(a))`.
    Average,
    /// The same step, taken only when `r ≥ Q(a)`.
    OptimisticMax,
}

impl TabularRule {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Self::Average),
            "optimistic-max" => Ok(Self::OptimisticMax),
            other => Err(Error::InvalidArgument(format!("unknown tabular rule `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Average => "average",
            Self::OptimisticMax => "optimistic-max",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LearningRate {
    /// `α = 1/n(a)`, which makes the table a running sample mean.
    SampleAverage,
    Constant(f64),
}

/// Per-action value table for the stateless matrix game.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularQ {
    pub values: [f64; 3],
    pub counts: [u64; 3],
    pub rule: TabularRule,
    pub lr: LearningRate,
}

impl TabularQ {
    pub fn new(rule: TabularRule, lr: LearningRate, initial: [f64; 3]) -> Self {
        Self {
            values: initial,
            counts: [0; 3],
            rule,
            lr,
        }
    }

    pub fn update(&mut self, a: MatrixAction, r: f64) {
        let i = a.index();
        self.counts[i] += 1;
        let alpha = match self.lr {
            LearningRate::SampleAverage => 1.0 / self.counts[i] as f64,
            LearningRate::Constant(a) => a,
        };
        let step = match self.rule {
            TabularRule::Average => true,
            TabularRule::OptimisticMax => r >= self.values[i],
        };
        if step {
            self.values[i] += alpha * (r - self.values[i]);
        }
    }

    /// Highest-valued action; the first wins ties.
    pub fn greedy(&self) -> MatrixAction {
        let mut best = 0;
        for i in 1..3 {
            if self.values[i] > self.values[best] {
                best = i;
            }
        }
        MatrixAction::ALL[best]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixLearnConfig {
    pub rule: TabularRule,
    pub episodes: usize,
    /// Probability of a uniform action; 1 gives pure uniform exploration.
    pub epsilon: f64,
    pub lr: LearningRate,
    pub initial: [[f64; 3]; 2],
}

impl MatrixLearnConfig {
    /// Uniform exploration with the rule's customary step size.
    pub fn uniform(rule: TabularRule, episodes: usize) -> Self {
        Self {
            rule,
            episodes,
            epsilon: 1.0,
            lr: match rule {
                TabularRule::Average => LearningRate::SampleAverage,
                TabularRule::OptimisticMax => LearningRate::Constant(0.5),
            },
            initial: [[0.0; 3]; 2],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixLearnResult {
    pub tables: [TabularQ; 2],
    /// `joint_counts[a1][a2]` over all played rounds.
    pub joint_counts: [[u64; 3]; 3],
    pub greedy: (MatrixAction, MatrixAction),
}

impl MatrixLearnResult {
    pub fn greedy_return(&self) -> f64 {
        matrix_payoff(self.greedy.0, self.greedy.1)
    }

    /// Empirical action distribution of `agent` over the run.
    pub fn empirical_policy(&self, agent: usize) -> [f64; 3] {
        let mut c = [0u64; 3];
        for (a1, row) in self.joint_counts.iter().enumerate() {
            for (a2, n) in row.iter().enumerate() {
                c[if agent == 0 { a1 } else { a2 }] += n;
            }
        }
        let total = c.iter().sum::<u64>().max(1) as f64;
        c.map(|v| v as f64 / total)
    }
}

/// Two independent tabular learners playing the coordination game.
pub fn tabular_matrix_learn(cfg: &MatrixLearnConfig, rng: &mut SimRng) -> Result<MatrixLearnResult> {
    if cfg.episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon {} outside [0, 1]", cfg.epsilon)));
    }
    let mut tables = [
        TabularQ::new(cfg.rule, cfg.lr, cfg.initial[0]),
        TabularQ::new(cfg.rule, cfg.lr, cfg.initial[1]),
    ];
    let mut joint_counts = [[0u64; 3]; 3];
    for _ in 0..cfg.episodes {
        let pick = |t: &TabularQ, rng: &mut SimRng| {
            if cfg.epsilon > 0.0 && rng.random::<f64>() < cfg.epsilon {
                MatrixAction::ALL[rng.random_range(0..3)]
            } else {
                t.greedy()
            }
        };
        let a1 = pick(&tables[0], rng);
        let a2 = pick(&tables[1], rng);
        let r = matrix_payoff(a1, a2);
        tables[0].update(a1, r);
        tables[1].update(a2, r);
        joint_counts[a1.index()][a2.index()] += 1;
    }
    let greedy = (tables[0].greedy(), tables[1].greedy());
    Ok(MatrixLearnResult {
        tables,
        joint_counts,
        greedy,
    })
}
