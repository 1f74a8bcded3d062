use std::collections::VecDeque;

use rand::Rng;

use crate::environment::EnvState;
use crate::Action;

/// One `(s, a, r, s')` transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: EnvState,
    pub action: Action,
    pub reward: f64,
    pub next_state: EnvState,
    /// Only the last transaction of the stream is terminal.
    pub terminal: bool,
}

/// Fixed-capacity FIFO pool; pushing into a full pool drops the oldest entry.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buffer: VecDeque<Experience>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            buffer: VecDeque::with_capacity(capacity.min(1 << 17)),
            capacity,
        }
    }

    pub fn push(&mut self, experience: Experience) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(experience);
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.buffer.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Experience> {
        self.buffer.get(i)
    }

    /// Uniform draw with replacement. Empty when the pool is empty.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, batch_size: usize, rng: &mut R) -> Vec<&'a Experience> {
        if self.buffer.is_empty() {
            return Vec::new();
        }
        (0..batch_size)
            .map(|_| &self.buffer[rng.random_range(0..self.buffer.len())])
            .collect()
    }
}
