use ndarray::{Array1, Array2};
use rand::Rng;

use crate::SimRng;

/// One experience record `(s, a_i, r, s')`. `reward` is stored as the learner
/// will train on it (already shifted where shifting is enabled).
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// Row-stacked mini-batch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(ts: &[Transition]) -> Self {
        let n = ts.len();
        let sd = ts.first().map_or(0, |t| t.state.len());
        let ad = ts.first().map_or(0, |t| t.action.len());
        let mut b = Self {
            states: Array2::zeros((n, sd)),
            actions: Array2::zeros((n, ad)),
            rewards: Array1::zeros(n),
            next_states: Array2::zeros((n, sd)),
        };
        for (i, t) in ts.iter().enumerate() {
            b.states.row_mut(i).assign(&Array1::from(t.state.clone()));
            b.actions.row_mut(i).assign(&Array1::from(t.action.clone()));
            b.rewards[i] = t.reward;
            b.next_states.row_mut(i).assign(&Array1::from(t.next_state.clone()));
        }
        b
    }
}

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    len: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            state_dim,
            action_dim,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            len: 0,
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of pushes, including overwritten ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: &Transition) {
        debug_assert_eq!(t.state.len(), self.state_dim);
        debug_assert_eq!(t.action.len(), self.action_dim);
        let slot = (self.inserted % self.capacity as u64) as usize;
        if self.len < self.capacity {
            self.states.extend_from_slice(&t.state);
            self.actions.extend_from_slice(&t.action);
            self.rewards.push(t.reward);
            self.next_states.extend_from_slice(&t.next_state);
            self.len += 1;
        } else {
            let (sd, ad) = (self.state_dim, self.action_dim);
            self.states[slot * sd..(slot + 1) * sd].copy_from_slice(&t.state);
            self.actions[slot * ad..(slot + 1) * ad].copy_from_slice(&t.action);
            self.rewards[slot] = t.reward;
            self.next_states[slot * sd..(slot + 1) * sd].copy_from_slice(&t.next_state);
        }
        self.inserted += 1;
    }

    pub fn get(&self, i: usize) -> Transition {
        let (sd, ad) = (self.state_dim, self.action_dim);
        Transition {
            state: self.states[i * sd..(i + 1) * sd].to_vec(),
            action: self.actions[i * ad..(i + 1) * ad].to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states[i * sd..(i + 1) * sd].to_vec(),
        }
    }

    pub fn sample(&self, n: usize, rng: &mut SimRng) -> Batch {
        let (sd, ad) = (self.state_dim, self.action_dim);
        let mut b = Batch {
            states: Array2::zeros((n, sd)),
            actions: Array2::zeros((n, ad)),
            rewards: Array1::zeros(n),
            next_states: Array2::zeros((n, sd)),
        };
        if self.len == 0 {
            return Batch::from_transitions(&[]);
        }
        for row in 0..n {
            let i = rng.random_range(0..self.len);
            for c in 0..sd {
                b.states[[row, c]] = self.states[i * sd + c];
                b.next_states[[row, c]] = self.next_states[i * sd + c];
            }
            for c in 0..ad {
                b.actions[[row, c]] = self.actions[i * ad + c];
            }
            b.rewards[row] = self.rewards[i];
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tr(x: f64) -> Transition {
        Transition {
            state: vec![x, -x],
            action: vec![x],
            reward: x,
            next_state: vec![x + 1.0, x - 1.0],
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(3, 2, 1);
        for i in 0..5 {
            buf.push(&tr(i as f64));
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.inserted(), 5);
        let rewards: Vec<f64> = (0..3).map(|i| buf.get(i).reward).collect();
        assert_eq!(rewards, vec![3.0, 4.0, 2.0]);
    }

    #[test]
    fn sampling_is_uniform_and_consistent() {
        let mut buf = ReplayBuffer::new(10, 2, 1);
        for i in 0..4 {
            buf.push(&tr(i as f64));
        }
        let mut rng = SimRng::seed_from_u64(3);
        let b = buf.sample(40_000, &mut rng);
        let mut counts = [0usize; 4];
        for i in 0..b.len() {
            let r = b.rewards[i];
            assert_eq!(b.states[[i, 0]], r);
            assert_eq!(b.next_states[[i, 1]], r - 1.0);
            counts[r as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 400.0, "{counts:?}");
        }
    }
}
