use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Action, PolicyState};

/// One step of experience. `next == None` marks the end of an episode
/// (the budget filled on this step).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: PolicyState,
    pub action: Action,
    pub reward: f64,
    pub next: Option<PolicyState>,
}

impl Transition {
    pub fn is_terminal(&self) -> bool {
        self.next.is_none()
    }
}

/// Bounded FIFO of transitions; the oldest entry is evicted first.
#[derive(Clone, Debug, Default)]
pub struct ReplayMemory {
    buffer: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            buffer: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity: capacity.max(1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buffer.iter()
    }

    /// Uniform batch: without replacement when enough transitions are
    /// stored, with replacement otherwise.
    pub fn sample(&self, batch_size: usize, rng: &mut impl Rng) -> Vec<&Transition> {
        let n = self.buffer.len();
        if n == 0 || batch_size == 0 {
            return Vec::new();
        }
        if n >= batch_size {
            rand::seq::index::sample(rng, n, batch_size)
                .into_iter()
                .map(|i| &self.buffer[i])
                .collect()
        } else {
            (0..batch_size).map(|_| &self.buffer[rng.gen_range(0..n)]).collect()
        }
    }
}
