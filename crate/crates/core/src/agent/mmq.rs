use ndarray::{Array1, ArrayView2, Axis};
use rand::SeedableRng;

use super::forward_model::{coverage_statistic, CandidateSet, ForwardModel, ForwardModelSpec};
use super::replay::{Batch, ReplayBuffer, Transition};
use super::{concat_cols, explore, layer_sizes, ActorCritic, AgentDims, Learner, MmqConfig, TrainDiagnostics, UpdateCounters};
use crate::error::{Error, Result};
use crate::nn::{Adam, FeedForwardNet, LossHead};
use crate::SimRng;

const TARGET_CHUNK_ROWS: usize = 192;

/// Index and value of the largest entry; the first index wins ties.
pub fn max_over_candidates(values: &[f64]) -> Result<(usize, f64)> {
    let mut it = values.iter().enumerate();
    let (mut best_i, mut best) = match it.next() {
        Some((i, v)) => (i, *v),
        None => return Err(Error::InvalidArgument("empty candidate set".into())),
    };
    for (i, v) in it {
        if *v > best {
            best = *v;
            best_i = i;
        }
    }
    Ok((best_i, best))
}

/// `max_k [reward(ŝ_k) + γ·value(ŝ_k)]` over an explicit candidate list.
pub fn maxmax_target<R, V>(candidates: &[Vec<f64>], gamma: f64, mut reward: R, mut value: V) -> Result<f64>
where
    R: FnMut(&[f64]) -> Result<f64>,
    V: FnMut(&[f64]) -> Result<f64>,
{
    let scores = candidates
        .iter()
        .map(|c| Ok(reward(c)? + gamma * value(c)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(max_over_candidates(&scores)?.1)
}

/// MaxMax Q-learning agent: DDPG whose critic target maximizes over the
/// observed next state and `M` states sampled from a learned bracket.
#[derive(Clone, Debug)]
pub struct MmqAgent {
    cfg: MmqConfig,
    dims: AgentDims,
    ac: ActorCritic,
    forward: ForwardModel,
    reward_model: FeedForwardNet,
    reward_opt: Adam,
    buffer: ReplayBuffer,
    rng: SimRng,
    seen: u64,
    triggers: u64,
}

impl MmqAgent {
    pub fn new(cfg: MmqConfig, dims: AgentDims, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if dims.state_box.dim() != dims.state_dim {
            return Err(Error::InvalidConfig("state box dimension mismatch".into()));
        }
        let ac = ActorCritic::new(dims.state_dim, dims.action_dim, &cfg.hidden, cfg.lr, seed)?;
        let forward = ForwardModel::new(
            &ForwardModelSpec {
                kind: cfg.forward_model,
                state_dim: dims.state_dim,
                action_dim: dims.action_dim,
                hidden: &cfg.hidden,
                tau_lower: cfg.tau_lower,
                tau_upper: cfg.tau_upper,
                lr: cfg.lr,
                reduction: cfg.quantile_reduction,
            },
            seed.wrapping_add(10),
        )?;
        let reward_model = FeedForwardNet::new(&layer_sizes(2 * dims.state_dim, &cfg.hidden, 1), seed.wrapping_add(20))?;
        Ok(Self {
            reward_opt: Adam::new(&reward_model, cfg.lr),
            reward_model,
            forward,
            buffer: ReplayBuffer::new(cfg.buffer_capacity, dims.state_dim, dims.action_dim),
            rng: SimRng::seed_from_u64(seed ^ 0x6d6d_715f_6167_656e),
            seen: 0,
            triggers: 0,
            ac,
            dims,
            cfg,
        })
    }

    pub fn config(&self) -> &MmqConfig {
        &self.cfg
    }

    pub fn dims(&self) -> &AgentDims {
        &self.dims
    }

    pub fn actor_critic(&self) -> &ActorCritic {
        &self.ac
    }

    pub fn actor_critic_mut(&mut self) -> &mut ActorCritic {
        &mut self.ac
    }

    pub fn forward_model(&self) -> &ForwardModel {
        &self.forward
    }

    pub fn forward_model_mut(&mut self) -> &mut ForwardModel {
        &mut self.forward
    }

    pub fn reward_model(&self) -> &FeedForwardNet {
        &self.reward_model
    }

    pub fn is_pretraining(&self) -> bool {
        self.seen < self.cfg.pretrain_steps
    }

    /// ε-greedy action with an explicit ε.
    pub fn act_with(&mut self, state: &[f64], epsilon: f64) -> Result<Vec<f64>> {
        let pre = self.is_pretraining();
        Ok(explore(&self.ac, state, pre, epsilon, self.cfg.exploration, &mut self.rng)?.0)
    }

    /// Stores a transition whose reward is already shifted.
    pub fn store(&mut self, t: &Transition) {
        self.buffer.push(t);
        self.seen += 1;
    }

    pub fn update_quantile_models(&mut self, batch: &Batch) -> Result<(f64, f64)> {
        self.forward.update(batch)
    }

    pub fn sample_candidates(&mut self, batch: &Batch) -> Result<CandidateSet> {
        self.forward
            .candidates(batch, self.cfg.samples, &self.dims.state_box, &mut self.rng)
    }

    /// `R̂(s, ŝ')` for every row pair.
    pub fn predicted_rewards(&self, states: ArrayView2<f64>, next_states: ArrayView2<f64>) -> Result<Array1<f64>> {
        let out = self.reward_model.forward_batch(concat_cols(states, next_states).view())?;
        Ok(out.column(0).to_owned())
    }

    /// Single-sample target over an explicit candidate list.
    pub fn compute_target(&self, state: &[f64], candidates: &[Vec<f64>]) -> Result<f64> {
        maxmax_target(
            candidates,
            self.cfg.gamma,
            |c| {
                let mut x = state.to_vec();
                x.extend_from_slice(c);
                Ok(self.reward_model.forward(&x)?[0])
            },
            |c| {
                let a = self.ac.actor_target.forward(c)?;
                let mut x = c.to_vec();
                x.extend_from_slice(&a);
                Ok(self.ac.critic_target.forward(&x)?[0])
            },
        )
    }

    /// Batched targets; the candidate rows are plain data so no gradient
    /// flows back into the next-state model.
    pub fn compute_targets(&self, batch: &Batch, cands: &CandidateSet) -> Result<Array1<f64>> {
        let n = batch.len();
        let per = cands.per_sample;
        if per == 0 {
            return Err(Error::InvalidArgument("empty candidate set".into()));
        }
        if cands.states.nrows() != n * per {
            return Err(Error::Shape(format!(
                "{} candidate rows for {n} samples of {per}",
                cands.states.nrows()
            )));
        }
        // Evaluated in slices of whole candidate groups so intermediate
        // activations stay small.
        let group = (TARGET_CHUNK_ROWS / per).max(1);
        let mut y = Array1::zeros(n);
        for start in (0..n).step_by(group) {
            let end = (start + group).min(n);
            let rows: Vec<usize> = (start * per..end * per).map(|r| r / per).collect();
            let repeated = batch.states.select(Axis(0), &rows);
            let cand = cands.states.slice(ndarray::s![start * per..end * per, ..]);
            let rewards = self.predicted_rewards(repeated.view(), cand)?;
            let values = self.ac.target_values(cand)?;
            let scores = &rewards + &(values * self.cfg.gamma);
            let scores = scores.as_slice().expect("contiguous");
            for k in start..end {
                let off = (k - start) * per;
                y[k] = max_over_candidates(&scores[off..off + per])?.1;
            }
        }
        Ok(y)
    }

    pub fn update_critic(&mut self, batch: &Batch, targets: &Array1<f64>) -> Result<f64> {
        self.ac
            .critic_step(batch.states.view(), batch.actions.view(), targets, None)
    }

    pub fn update_reward_model(&mut self, batch: &Batch) -> Result<f64> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let x = concat_cols(batch.states.view(), batch.next_states.view());
        let t = batch.rewards.view().insert_axis(Axis(1));
        let (loss, grads) = self.reward_model.backward(x.view(), &LossHead::Mse { targets: t, weights: None })?;
        self.reward_opt.step(&mut self.reward_model, &grads)?;
        Ok(loss)
    }

    pub fn update_actor(&mut self, batch: &Batch) -> Result<f64> {
        self.ac.actor_step(batch.states.view())
    }

    /// One full training trigger on `batch`: next-state models, candidate
    /// targets, repeated critic steps, reward model, actor, target nets.
    pub fn train_on_batch(&mut self, batch: &Batch) -> Result<TrainDiagnostics> {
        if batch.is_empty() {
            return Ok(TrainDiagnostics::default());
        }
        let ql = self.update_quantile_models(batch)?;
        let cands = self.sample_candidates(batch)?;
        let targets = self.compute_targets(batch, &cands)?;
        let mut critic_loss = 0.0;
        for _ in 0..self.cfg.critic_ratio {
            critic_loss = self.update_critic(batch, &targets)?;
        }
        let reward_loss = self.update_reward_model(batch)?;
        let actor_loss = self.update_actor(batch)?;
        self.ac.update_targets(self.cfg.target_mix)?;
        self.triggers += 1;
        Ok(TrainDiagnostics {
            critic_loss,
            actor_loss,
            reward_loss: Some(reward_loss),
            quantile_losses: Some(ql),
            coverage: Some(cands.coverage),
            mean_bound_width: Some(cands.mean_width),
        })
    }

    /// Runs a trigger on a freshly sampled batch if past pretraining.
    pub fn train_step(&mut self) -> Result<Option<TrainDiagnostics>> {
        if self.seen <= self.cfg.pretrain_steps || self.buffer.is_empty() {
            return Ok(None);
        }
        let batch = self.buffer.sample(self.cfg.batch_size, &mut self.rng);
        self.train_on_batch(&batch).map(Some)
    }
}

impl Learner for MmqAgent {
    fn act(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        self.act_with(state, self.cfg.epsilon)
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
        self.store(&Transition {
            state: state.to_vec(),
            action: action.to_vec(),
            reward: reward - self.cfg.reward_shift,
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

    fn coverage_on(&self, batch: &Batch) -> Result<Option<f64>> {
        if batch.is_empty() {
            return Ok(None);
        }
        let (lo, hi) = self.forward.bounds(batch.states.view(), batch.actions.view())?;
        coverage_statistic(lo.view(), hi.view(), batch.next_states.view()).map(Some)
    }

    fn steps_seen(&self) -> u64 {
        self.seen
    }

    fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    fn networks(&self) -> Vec<(&'static str, &FeedForwardNet)> {
        let mut v: Vec<_> = self.ac.nets().into_iter().collect();
        v.extend(self.forward.nets());
        v.push(("reward_model", &self.reward_model));
        v
    }

    fn networks_mut(&mut self) -> Vec<(&'static str, &mut FeedForwardNet)> {
        let mut v: Vec<_> = self.ac.nets_mut().into_iter().collect();
        v.extend(self.forward.nets_mut());
        v.push(("reward_model", &mut self.reward_model));
        v
    }
}
