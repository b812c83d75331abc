use alloc::vec::Vec;
use core::borrow::Borrow;

use super::network::QNetwork;
use super::policy::argmax;
use super::replay::Transition;
use crate::tensornet::{copy_params, Graph, Mode, Optimizer, ParamSet, Tensor};
use crate::Result;

/// How the bootstrap value of the next state is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetRule {
    /// `max_a Q_target(s', a)`.
    Dqn,
    /// `Q_target(s', argmax_a Q_online(s', a))`.
    Ddqn,
}

pub fn dqn_target_value(reward: f64, terminal: bool, next_target: &[f64], gamma: f64) -> f64 {
    if terminal {
        return reward;
    }
    let best = next_target.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    reward + gamma * best
}

pub fn ddqn_target_value(
    reward: f64,
    terminal: bool,
    next_online: &[f64],
    next_target: &[f64],
    gamma: f64,
) -> f64 {
    if terminal {
        return reward;
    }
    reward + gamma * next_target[argmax(next_online)]
}

/// DQN target of a single transition.
pub fn dqn_target<N: QNetwork>(
    net: &N,
    transition: &Transition<N::Input>,
    target_params: &ParamSet,
    gamma: f64,
) -> Result<f64> {
    let t = core::slice::from_ref(transition);
    Ok(bootstrap_targets(net, TargetRule::Dqn, t, target_params, target_params, gamma)?[0])
}

/// Double-DQN target of a single transition.
pub fn ddqn_target<N: QNetwork>(
    net: &N,
    transition: &Transition<N::Input>,
    online_params: &ParamSet,
    target_params: &ParamSet,
    gamma: f64,
) -> Result<f64> {
    let t = core::slice::from_ref(transition);
    Ok(bootstrap_targets(net, TargetRule::Ddqn, t, online_params, target_params, gamma)?[0])
}

/// Regression targets for a batch; networks run in inference mode and
/// terminal transitions are never bootstrapped.
pub fn bootstrap_targets<N: QNetwork, T: Borrow<Transition<N::Input>>>(
    net: &N,
    rule: TargetRule,
    batch: &[T],
    online_params: &ParamSet,
    target_params: &ParamSet,
    gamma: f64,
) -> Result<Vec<f64>> {
    let live: Vec<&N::Input> = batch
        .iter()
        .map(Borrow::borrow)
        .filter(|t| !t.terminal)
        .map(|t| &*t.next_obs)
        .collect();
    let (q_target, q_online) = if live.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let q_target = net.q_rows(target_params, &live)?;
        let q_online = match rule {
            TargetRule::Dqn => Vec::new(),
            TargetRule::Ddqn => net.q_rows(online_params, &live)?,
        };
        (q_target, q_online)
    };
    let mut k = 0;
    Ok(batch
        .iter()
        .map(Borrow::borrow)
        .map(|t| {
            if t.terminal {
                return t.reward;
            }
            let y = match rule {
                TargetRule::Dqn => dqn_target_value(t.reward, false, &q_target[k], gamma),
                TargetRule::Ddqn => {
                    ddqn_target_value(t.reward, false, &q_online[k], &q_target[k], gamma)
                }
            };
            k += 1;
            y
        })
        .collect())
}

/// One gradient step on `mean((Q(s, a) - y)²)` over the batch; targets are
/// treated as constants. Returns the loss before the step.
pub fn td_update<N: QNetwork, T: Borrow<Transition<N::Input>>>(
    net: &N,
    params: &mut ParamSet,
    batch: &[T],
    targets: &[f64],
    optimizer: &Optimizer,
) -> Result<f64> {
    let inputs: Vec<&N::Input> = batch.iter().map(|t| &*t.borrow().obs).collect();
    let actions: Vec<usize> = batch.iter().map(|t| t.borrow().action).collect();
    let mut g = Graph::new();
    let q = net.forward(&mut g, params, &inputs, Mode::Train)?;
    let picked = g.gather(q, &actions)?;
    let loss = g.mse_loss(picked, &Tensor::vector(targets.to_vec()))?;
    let value = g.value(loss).data()[0];
    g.backward(loss, params)?;
    g.commit_running_stats(params);
    optimizer.step(params);
    Ok(value)
}

/// Copies the online weights into the target network when `step` is a
/// positive multiple of `period`. Returns whether a copy happened.
pub fn sync_target(online: &ParamSet, target: &mut ParamSet, step: u64, period: u64) -> bool {
    if period == 0 || step == 0 || !step.is_multiple_of(period) {
        return false;
    }
    *target = copy_params(online);
    true
}
