use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True terminal only; time-limit truncation is stored as `false`.
    pub done: bool,
}

/// Column-major minibatch: one transition per column.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: DMatrix<f64>,
    pub actions: DMatrix<f64>,
    pub rewards: DVector<f64>,
    pub next_states: DMatrix<f64>,
    pub dones: DVector<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(transitions: &[Transition]) -> Result<Self> {
        let first = transitions.first().ok_or_else(|| Error::invalid("empty batch"))?;
        let (sd, ad) = (first.state.len(), first.action.len());
        let n = transitions.len();
        let mut b = Batch {
            states: DMatrix::zeros(sd, n),
            actions: DMatrix::zeros(ad, n),
            rewards: DVector::zeros(n),
            next_states: DMatrix::zeros(sd, n),
            dones: DVector::zeros(n),
        };
        for (j, t) in transitions.iter().enumerate() {
            if t.state.len() != sd || t.next_state.len() != sd || t.action.len() != ad {
                return Err(Error::invalid("transitions in a batch must share dimensions"));
            }
            b.states.column_mut(j).copy_from_slice(&t.state);
            b.actions.column_mut(j).copy_from_slice(&t.action);
            b.next_states.column_mut(j).copy_from_slice(&t.next_state);
            b.rewards[j] = t.reward;
            b.dones[j] = if t.done { 1.0 } else { 0.0 };
        }
        Ok(b)
    }
}

/// Fixed-capacity ring buffer stored as flat arrays; storage grows on demand
/// up to the capacity.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<bool>,
    len: usize,
    head: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            state_dim,
            action_dim,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
            len: 0,
            head: 0,
            pushed: 0,
        })
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

    /// Total number of transitions ever pushed.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.state.len() != self.state_dim || t.next_state.len() != self.state_dim {
            return Err(Error::invalid("transition state has the wrong dimension"));
        }
        if t.action.len() != self.action_dim {
            return Err(Error::invalid("transition action has the wrong dimension"));
        }
        if self.len < self.capacity {
            self.states.extend_from_slice(&t.state);
            self.actions.extend_from_slice(&t.action);
            self.next_states.extend_from_slice(&t.next_state);
            self.rewards.push(t.reward);
            self.dones.push(t.done);
            self.len += 1;
        } else {
            let i = self.head;
            let (s, a) = (self.state_dim, self.action_dim);
            self.states[i * s..(i + 1) * s].copy_from_slice(&t.state);
            self.actions[i * a..(i + 1) * a].copy_from_slice(&t.action);
            self.next_states[i * s..(i + 1) * s].copy_from_slice(&t.next_state);
            self.rewards[i] = t.reward;
            self.dones[i] = t.done;
        }
        self.head = (self.head + 1) % self.capacity;
        self.pushed += 1;
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len {
            return None;
        }
        let (s, a) = (self.state_dim, self.action_dim);
        Some(Transition {
            state: self.states[i * s..(i + 1) * s].to_vec(),
            action: self.actions[i * a..(i + 1) * a].to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states[i * s..(i + 1) * s].to_vec(),
            done: self.dones[i],
        })
    }

    /// Uniform minibatch, distinct indices within the batch.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        if batch_size == 0 || batch_size > self.len {
            return Err(Error::Protocol(format!(
                "cannot sample {batch_size} transitions from a buffer holding {}",
                self.len
            )));
        }
        let idx = rand::seq::index::sample(rng, self.len, batch_size);
        let (s, a) = (self.state_dim, self.action_dim);
        let mut b = Batch {
            states: DMatrix::zeros(s, batch_size),
            actions: DMatrix::zeros(a, batch_size),
            rewards: DVector::zeros(batch_size),
            next_states: DMatrix::zeros(s, batch_size),
            dones: DVector::zeros(batch_size),
        };
        for (j, i) in idx.iter().enumerate() {
            b.states.column_mut(j).copy_from_slice(&self.states[i * s..(i + 1) * s]);
            b.actions
                .column_mut(j)
                .copy_from_slice(&self.actions[i * a..(i + 1) * a]);
            b.next_states
                .column_mut(j)
                .copy_from_slice(&self.next_states[i * s..(i + 1) * s]);
            b.rewards[j] = self.rewards[i];
            b.dones[j] = if self.dones[i] { 1.0 } else { 0.0 };
        }
        Ok(b)
    }

    /// Iterates stored actions (in storage order).
    pub fn actions(&self) -> impl Iterator<Item = &[f64]> {
        self.actions.chunks(self.action_dim.max(1)).take(self.len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(x: f64) -> Transition {
        Transition {
            state: vec![x, x],
            action: vec![x],
            reward: x,
            next_state: vec![x + 1.0, x + 1.0],
            done: false,
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(3, 2, 1).unwrap();
        for i in 0..5 {
            buf.push(t(i as f64)).unwrap();
            assert_eq!(buf.len(), (i + 1).min(3));
        }
        let rewards: Vec<f64> = (0..3).map(|i| buf.get(i).unwrap().reward).collect();
        // slots 0 and 1 were overwritten by transitions 3 and 4
        assert_eq!(rewards, vec![3.0, 4.0, 2.0]);
        assert_eq!(buf.pushed(), 5);
    }

    #[test]
    fn samples_are_distinct_within_a_batch() {
        let mut buf = ReplayBuffer::new(100, 2, 1).unwrap();
        for i in 0..50 {
            buf.push(t(i as f64)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = buf.sample(50, &mut rng).unwrap();
        let mut r: Vec<f64> = b.rewards.iter().copied().collect();
        r.sort_by(f64::total_cmp);
        r.dedup();
        assert_eq!(r.len(), 50);
        assert!(buf.sample(51, &mut rng).is_err());
    }

    #[test]
    fn wrong_dimensions_rejected() {
        let mut buf = ReplayBuffer::new(4, 3, 1).unwrap();
        assert!(buf.push(t(0.0)).is_err());
    }
}
