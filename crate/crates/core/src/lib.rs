//! Core of the grasp-learning system: a small reverse-mode tensor engine, a
//! kinematic tabletop grasping simulator with overhead and wrist cameras, the
//! two-stream Grasp-Q-Network, off-policy learners (tabular Q-learning, DQN,
//! Double-DQN) and the visual-servoing episode loop.
//!
//! The crate is `no_std` and only needs `alloc`; all file IO, configuration
//! parsing and the command line live in the `graspq` crate.
#![no_std]

extern crate alloc;

pub mod agent;
pub mod error;
pub mod gqn;
pub mod math;
pub mod seed;
pub mod servo;
pub mod tensornet;
pub mod world;

pub use error::{Error, Result};
