//! Ring-buffer replay memory with uniform seeded sampling.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::sim::Phase;

pub const STATE_DIM: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: [f64; STATE_DIM],
    pub action: Phase,
    /// Negative pressure observed after the action's decision window.
    pub reward: f64,
    pub next_state: [f64; STATE_DIM],
}

#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buf: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayMemory { buf: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.buf.get(index)
    }

    /// Append, evicting the oldest transition at capacity.
    pub fn push(&mut self, t: Transition) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(t);
    }

    /// Uniformly sample `count` distinct transitions. `None` while the
    /// memory holds fewer than `count`.
    pub fn sample<'a>(&'a self, rng: &mut ChaCha8Rng, count: usize) -> Option<Vec<&'a Transition>> {
        if count == 0 || self.buf.len() < count {
            return None;
        }
        // Partial Fisher-Yates over the index space.
        let mut indices: Vec<usize> = (0..self.buf.len()).collect();
        for i in 0..count {
            let j = rng.gen_range(i..indices.len());
            indices.swap(i, j);
        }
        Some(indices[..count].iter().map(|&i| &self.buf[i]).collect())
    }
}
