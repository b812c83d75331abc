//! Off-policy learners: replay buffer, ε-greedy policy, DQN / Double-DQN
//! targets and updates, target-network synchronisation and the tabular
//! Q-learning baseline.

mod network;
mod policy;
mod replay;
mod tabular;
mod targets;

pub use network::{OneHotLinear, QNetwork};
pub use policy::{argmax, select_action, EpsilonSchedule};
pub use replay::{ReplayBuffer, Transition};
pub use tabular::{discretize, qtable_update, QTable, StateCode};
pub use targets::{
    bootstrap_targets, ddqn_target, ddqn_target_value, dqn_target, dqn_target_value, sync_target,
    td_update, TargetRule,
};
