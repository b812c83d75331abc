use rand::Rng;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy: a uniformly random action with probability ε, else [`argmax`].
pub fn select_action<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if epsilon > 0.0 && rng.gen_bool(epsilon) {
        rng.gen_range(0..q.len())
    } else {
        argmax(q)
    }
}

/// Linear decay from `start` to `end` over the first `decay_fraction` of
/// the episode budget, then constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.1,
            decay_fraction: 0.4,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, episode: usize, total_episodes: usize) -> f64 {
        let span = self.decay_fraction * total_episodes as f64;
        if span <= 0.0 || episode as f64 >= span {
            return self.end;
        }
        self.start + (self.end - self.start) * (episode as f64 / span)
    }
}
