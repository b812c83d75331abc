//! Five-state deterministic chain and its exact action values by value
//! iteration. State 4 is absorbing; reaching it pays +1, every other move
//! costs 0.1.

use std::sync::Arc;

use graspq_core::agent::{
    bootstrap_targets, qtable_update, sync_target, td_update, OneHotLinear, QNetwork, QTable, TargetRule,
    Transition,
};
use graspq_core::tensornet::{copy_params, Optimizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STATES: usize = 5;
pub const ACTIONS: usize = 2;
pub const GOAL: usize = STATES - 1;

/// `(next, reward, terminal)` of taking `a` (0 left, 1 right) in `s`.
pub fn step(s: usize, a: usize) -> (usize, f64, bool) {
    let next = if a == 0 { s.saturating_sub(1) } else { s + 1 };
    if next == GOAL {
        (next, 1.0, true)
    } else {
        (next, -0.1, false)
    }
}

/// `Q*` over the non-terminal states, iterated to a fixed point.
pub fn optimal_q(gamma: f64) -> [[f64; ACTIONS]; GOAL] {
    let mut q = [[0.0; ACTIONS]; GOAL];
    loop {
        let mut next_q = q;
        for (s, row) in next_q.iter_mut().enumerate() {
            for (a, v) in row.iter_mut().enumerate() {
                let (n, r, done) = step(s, a);
                *v = if done { r } else { r + gamma * q[n][0].max(q[n][1]) };
            }
        }
        let delta = (0..GOAL)
            .flat_map(|s| (0..ACTIONS).map(move |a| (s, a)))
            .map(|(s, a)| (next_q[s][a] - q[s][a]).abs())
            .fold(0.0, f64::max);
        q = next_q;
        if delta < 1e-14 {
            return q;
        }
    }
}

/// Every non-terminal transition of the chain.
pub fn transitions() -> Vec<Transition<usize>> {
    (0..GOAL)
        .flat_map(|s| (0..ACTIONS).map(move |a| (s, a)))
        .map(|(s, a)| {
            let (n, r, done) = step(s, a);
            Transition {
                obs: Arc::new(s),
                action: a,
                reward: r,
                next_obs: Arc::new(n),
                terminal: done,
            }
        })
        .collect()
}

fn max_gap(q: impl Fn(usize, usize) -> f64, gamma: f64) -> f64 {
    let q_star = optimal_q(gamma);
    (0..GOAL)
        .flat_map(|s| (0..ACTIONS).map(move |a| (s, a)))
        .map(|(s, a)| (q(s, a) - q_star[s][a]).abs())
        .fold(0.0, f64::max)
}

/// ∞-norm distance to `Q*` after tabular Q-learning on uniformly drawn
/// state-action pairs.
pub fn tabular_error(gamma: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut table = QTable::new(ACTIONS);
    for _ in 0..20_000 {
        let s = rng.gen_range(0..GOAL);
        let a = rng.gen_range(0..ACTIONS);
        let (n, r, done) = step(s, a);
        qtable_update(&mut table, s as u64, a, r, n as u64, done, 0.1, gamma);
    }
    max_gap(|s, a| table.get(s as u64, a), gamma)
}

/// ∞-norm distance to `Q*` of a one-hot linear DQN trained on the full
/// transition set with a periodically synced target network.
pub fn linear_dqn_error(gamma: f64) -> f64 {
    let net = OneHotLinear {
        states: STATES,
        actions: ACTIONS,
    };
    let mut online = net.build(1).unwrap();
    let mut target = copy_params(&online);
    let batch = transitions();
    let opt = Optimizer::Sgd { lr: 1.0 };
    for step in 1..=3000u64 {
        let y = bootstrap_targets(&net, TargetRule::Dqn, &batch, &online, &target, gamma).unwrap();
        td_update(&net, &mut online, &batch, &y, &opt).unwrap();
        sync_target(&online, &mut target, step, 20);
    }
    let states: Vec<usize> = (0..GOAL).collect();
    let refs: Vec<&usize> = states.iter().collect();
    let q = net.q_rows(&online, &refs).unwrap();
    max_gap(|s, a| q[s][a], gamma)
}
