use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// One stored interaction. `mixed_action` is what the environment executed.
///
/// `done` marks a true terminal state and masks bootstrapping. The bundled
/// tasks only end by time limit, which is a truncation, so their transitions
/// are stored with `done = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub mixed_action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Tensor,
    pub actions: Tensor,
    /// `B × 1`
    pub rewards: Tensor,
    pub next_states: Tensor,
    /// `B × 1`, 1.0 for terminal transitions.
    pub dones: Tensor,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_transitions(ts: &[&Transition]) -> Result<Self> {
        let first = ts.first().ok_or_else(|| Error::config("cannot build an empty batch"))?;
        let (o, a) = (first.state.len(), first.mixed_action.len());
        let n = ts.len();
        let mut b = Batch {
            states: Tensor::zeros((n, o)),
            actions: Tensor::zeros((n, a)),
            rewards: Tensor::zeros((n, 1)),
            next_states: Tensor::zeros((n, o)),
            dones: Tensor::zeros((n, 1)),
        };
        for (r, t) in ts.iter().enumerate() {
            if t.state.len() != o || t.next_state.len() != o || t.mixed_action.len() != a {
                return Err(Error::Dimension {
                    context: "batch transition",
                    expected: o,
                    got: t.state.len(),
                });
            }
            for c in 0..o {
                b.states[[r, c]] = t.state[c];
                b.next_states[[r, c]] = t.next_state[c];
            }
            for c in 0..a {
                b.actions[[r, c]] = t.mixed_action[c];
            }
            b.rewards[[r, 0]] = t.reward;
            b.dones[[r, 0]] = if t.done { 1.0 } else { 0.0 };
        }
        Ok(b)
    }
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 20)),
            head: 0,
            inserted: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn evicted(&self) -> u64 {
        self.inserted - self.items.len() as u64
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
        }
        self.head = (self.head + 1) % self.capacity;
        self.inserted += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sampling with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        if self.items.is_empty() || batch_size == 0 {
            return Err(Error::config("sampling needs a non-empty buffer and batch size"));
        }
        let picks: Vec<&Transition> = (0..batch_size)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect();
        Batch::from_transitions(&picks)
    }
}
