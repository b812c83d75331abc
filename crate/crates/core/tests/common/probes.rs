//! Oracles for the two bootstrap target rules.

use std::sync::Arc;

use graspq_core::agent::{bootstrap_targets, OneHotLinear, TargetRule, Transition};
use graspq_core::gqn::{Gqn, ViewMode};
use graspq_core::tensornet::{copy_params, Tensor};
use graspq_core::world::Observation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mini_gqn;

fn observation(rng: &mut ChaCha8Rng) -> Observation {
    let mut t = |shape: Vec<usize>| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    };
    Observation {
        overhead: t(vec![4, 8, 8]),
        wrist: t(vec![3, 8, 8]),
        motor: t(vec![5]),
    }
}

/// Number of random transitions on which the DDQN and DQN targets differ
/// bitwise when the online and target parameters are copies of each other.
pub fn identity_mismatches(count: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gqn = Gqn::new(mini_gqn::config(ViewMode::Multi)).unwrap();
    let online = gqn.build(seed).unwrap();
    let target = copy_params(&online);
    assert!(online.bit_eq(&target));
    let pool: Vec<Arc<Observation>> = (0..64).map(|_| Arc::new(observation(&mut rng))).collect();
    let batch: Vec<Transition<Observation>> = (0..count)
        .map(|_| Transition {
            obs: pool[rng.gen_range(0..pool.len())].clone(),
            action: rng.gen_range(0..9),
            reward: [10.0, 1.0, -1.0, -0.025][rng.gen_range(0..4)],
            next_obs: pool[rng.gen_range(0..pool.len())].clone(),
            terminal: rng.gen_bool(0.2),
        })
        .collect();
    let mut mismatches = 0;
    for chunk in batch.chunks(256) {
        let dqn = bootstrap_targets(&gqn, TargetRule::Dqn, chunk, &online, &target, 0.9).unwrap();
        let ddqn = bootstrap_targets(&gqn, TargetRule::Ddqn, chunk, &online, &target, 0.9).unwrap();
        mismatches += dqn.iter().zip(&ddqn).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
    }
    mismatches
}

/// Per-trial bias of the DQN and DDQN targets on a single-state MDP whose
/// true action values are all zero. Online and target estimates carry
/// independent uniform noise in [-1, 1].
pub fn target_bias(trials: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = OneHotLinear { states: 1, actions: 9 };
    let t = Transition {
        obs: Arc::new(0usize),
        action: 0,
        reward: 0.0,
        next_obs: Arc::new(0usize),
        terminal: false,
    };
    let mut online = net.build(0).unwrap();
    let mut target = net.build(0).unwrap();
    let (mut dqn, mut ddqn) = (Vec::with_capacity(trials), Vec::with_capacity(trials));
    for _ in 0..trials {
        for p in [&mut online, &mut target] {
            for v in p.get_mut("q.weight").unwrap().data_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let batch = [&t];
        dqn.push(bootstrap_targets(&net, TargetRule::Dqn, &batch, &online, &target, 0.9).unwrap()[0]);
        ddqn.push(bootstrap_targets(&net, TargetRule::Ddqn, &batch, &online, &target, 0.9).unwrap()[0]);
    }
    (dqn, ddqn)
}
