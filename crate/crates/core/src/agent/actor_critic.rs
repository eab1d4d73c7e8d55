use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};

use crate::error::Result;
use crate::nn::{soft_update, Adam, FeedForwardNet, LossHead, OutputActivation};

/// Deterministic actor, critic over `(s, a_i)`, and their target copies.
#[derive(Clone, Debug)]
pub struct ActorCritic {
    pub critic: FeedForwardNet,
    pub critic_target: FeedForwardNet,
    pub actor: FeedForwardNet,
    pub actor_target: FeedForwardNet,
    critic_opt: Adam,
    actor_opt: Adam,
    state_dim: usize,
    action_dim: usize,
}

pub(crate) fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(hidden.len() + 2);
    v.push(input);
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

pub(crate) fn concat_cols(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[a, b]).expect("row counts match")
}

impl ActorCritic {
    pub fn new(state_dim: usize, action_dim: usize, hidden: &[usize], lr: f64, seed: u64) -> Result<Self> {
        let critic = FeedForwardNet::new(&layer_sizes(state_dim + action_dim, hidden, 1), seed)?;
        let actor = FeedForwardNet::new(&layer_sizes(state_dim, hidden, action_dim), seed.wrapping_add(1))?
            .with_output(OutputActivation::Tanh { scale: 1.0 });
        Ok(Self {
            critic_opt: Adam::new(&critic, lr),
            actor_opt: Adam::new(&actor, lr),
            critic_target: critic.clone(),
            actor_target: actor.clone(),
            critic,
            actor,
            state_dim,
            action_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn policy(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.actor.forward(state)
    }

    pub fn q_values(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array1<f64>> {
        let q = self.critic.forward_batch(concat_cols(states, actions).view())?;
        Ok(q.column(0).to_owned())
    }

    /// `Q_target(s', π_target(s'))` for every row.
    pub fn target_values(&self, next_states: ArrayView2<f64>) -> Result<Array1<f64>> {
        let a = self.actor_target.forward_batch(next_states)?;
        let q = self.critic_target.forward_batch(concat_cols(next_states, a.view()).view())?;
        Ok(q.column(0).to_owned())
    }

    /// Critic loss and gradients without applying them.
    pub fn critic_gradients(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        targets: &Array1<f64>,
        weights: Option<&[f64]>,
    ) -> Result<(f64, crate::nn::GradientBundle)> {
        let x = concat_cols(states, actions);
        let t = targets.view().insert_axis(Axis(1));
        self.critic.backward(x.view(), &LossHead::Mse { targets: t, weights })
    }

    /// One Adam step on the (optionally per-sample weighted) squared TD error.
    pub fn critic_step(
        &mut self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        targets: &Array1<f64>,
        weights: Option<&[f64]>,
    ) -> Result<f64> {
        let (loss, grads) = self.critic_gradients(states, actions, targets, weights)?;
        self.critic_opt.step(&mut self.critic, &grads)?;
        Ok(loss)
    }

    /// Actor loss `−mean Q(s, π(s))` and its gradient, chained through the
    /// critic's action input.
    pub fn actor_gradients(&self, states: ArrayView2<f64>) -> Result<(f64, crate::nn::GradientBundle)> {
        let actions = self.actor.forward_batch(states)?;
        let x = concat_cols(states, actions.view());
        let q = self.critic.forward_batch(x.view())?;
        let n = states.nrows();
        // Unit upstream gradient on every Q gives ∂Q_n/∂(s, a) row by row.
        let dq = self.critic.backward_from(x.view(), Array2::ones((n, 1)))?;
        let dq_da = dq.input.slice(s![.., self.state_dim..]).to_owned();
        let q_col = q.column(0).to_owned();
        self.actor.backward(
            states,
            &LossHead::CriticChain {
                q: q_col.view(),
                dq_da: dq_da.view(),
            },
        )
    }

    pub fn actor_step(&mut self, states: ArrayView2<f64>) -> Result<f64> {
        let (loss, grads) = self.actor_gradients(states)?;
        self.actor_opt.step(&mut self.actor, &grads)?;
        Ok(loss)
    }

    pub fn update_targets(&mut self, mix: f64) -> Result<()> {
        soft_update(&mut self.critic_target, &self.critic, mix)?;
        soft_update(&mut self.actor_target, &self.actor, mix)
    }

    pub fn critic_updates(&self) -> u64 {
        self.critic_opt.steps()
    }

    pub fn actor_updates(&self) -> u64 {
        self.actor_opt.steps()
    }

    pub(crate) fn nets(&self) -> [(&'static str, &FeedForwardNet); 4] {
        [
            ("critic", &self.critic),
            ("critic_target", &self.critic_target),
            ("actor", &self.actor),
            ("actor_target", &self.actor_target),
        ]
    }

    pub(crate) fn nets_mut(&mut self) -> [(&'static str, &mut FeedForwardNet); 4] {
        [
            ("critic", &mut self.critic),
            ("critic_target", &mut self.critic_target),
            ("actor", &mut self.actor),
            ("actor_target", &mut self.actor_target),
        ]
    }
}
