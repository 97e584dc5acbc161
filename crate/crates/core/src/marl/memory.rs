use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::num::Matrix;

/// Embedding view of one game state as seen by the Q-network.
#[derive(Debug, Clone, PartialEq)]
pub struct StepView {
    pub target: usize,
    /// Graph summary `h_G` for this target.
    pub h_g: Vec<f64>,
    pub h_v: Vec<f64>,
}

impl StepView {
    /// `[h_G, h_v]`.
    pub fn vector(&self) -> Vec<f64> {
        [self.h_g.as_slice(), self.h_v.as_slice()].concat()
    }
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Arc<StepView>,
    pub action: (usize, usize),
    pub h_u: Vec<f64>,
    pub next: Arc<StepView>,
    /// Embeddings of the agent's feasible controlled nodes in the next state.
    pub next_candidates: Arc<Matrix>,
    pub reward: f64,
    pub terminal: bool,
}

impl Transition {
    pub fn new(
        state: Arc<StepView>,
        action: (usize, usize),
        h_u: Vec<f64>,
        next: Arc<StepView>,
        next_candidates: Arc<Matrix>,
        reward: f64,
        terminal: bool,
    ) -> Result<Self> {
        if reward != 1.0 && reward != -1.0 {
            return Err(Error::Domain(format!("reward must be ±1, got {reward}")));
        }
        Ok(Transition { state, action, h_u, next, next_candidates, reward, terminal })
    }
}

/// Bounded FIFO; the oldest transition is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    buf: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        ReplayMemory { capacity: capacity.max(1), buf: VecDeque::with_capacity(capacity.clamp(1, 1 << 16)) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(t);
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.buf[i]
    }

    /// Distinct indices, uniformly; `None` if fewer than `batch` are stored.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        if batch == 0 || self.buf.len() < batch {
            return None;
        }
        Some(sample(rng, self.buf.len(), batch).into_iter().map(|i| &self.buf[i]).collect())
    }
}
