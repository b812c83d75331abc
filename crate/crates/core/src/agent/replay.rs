use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::{Error, Result};

/// One training sample `(o_t, a_t, r_t, o_{t+1}, terminal)`.
///
/// Observations are shared: the `next_obs` of one step is the `obs` of the
/// following step, so consecutive transitions point at the same frame.
#[derive(Debug)]
pub struct Transition<O> {
    pub obs: Arc<O>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Arc<O>,
    pub terminal: bool,
}

impl<O> Clone for Transition<O> {
    fn clone(&self) -> Self {
        Self {
            obs: Arc::clone(&self.obs),
            action: self.action,
            reward: self.reward,
            next_obs: Arc::clone(&self.next_obs),
            terminal: self.terminal,
        }
    }
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<O> {
    items: Vec<Transition<O>>,
    capacity: usize,
    inserted: u64,
}

impl<O> ReplayBuffer<O> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            inserted: 0,
        }
    }

    pub fn push(&mut self, t: Transition<O>) {
        let slot = (self.inserted % self.capacity as u64) as usize;
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[slot] = t;
        }
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total pushes since creation.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Stored transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition<O>> {
        let split = if self.items.len() < self.capacity {
            0
        } else {
            (self.inserted % self.capacity as u64) as usize
        };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..batch).map(|_| rng.gen_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Transition<O>>> {
        Ok(self
            .sample_indices(batch, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}
