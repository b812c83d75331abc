#![allow(dead_code)]
pub mod chain;
pub mod fd;
pub mod layers;
pub mod mini_gqn;
pub mod probes;
