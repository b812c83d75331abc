use alloc::vec::Vec;

use crate::gqn::{Gqn, ObsBatch};
use crate::tensornet::{init_params, Graph, LayerSpec, Mode, NodeId, ParamSet, Tensor};
use crate::world::Observation;
use crate::{Error, Result};

/// A parametric action-value function over inputs of type `Input`.
pub trait QNetwork {
    type Input;

    fn action_count(&self) -> usize;

    /// Records the network on `g`, returning a `[batch, actions]` node.
    fn forward(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        inputs: &[&Self::Input],
        mode: Mode,
    ) -> Result<NodeId>;

    /// Infer-mode Q-values, one row per input.
    fn q_rows(&self, params: &ParamSet, inputs: &[&Self::Input]) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let q = self.forward(&mut g, params, inputs, Mode::Infer)?;
        Ok(g.value(q)
            .data()
            .chunks_exact(self.action_count())
            .map(<[f64]>::to_vec)
            .collect())
    }
}

impl QNetwork for Gqn {
    type Input = Observation;

    fn action_count(&self) -> usize {
        self.config().action_count
    }

    fn forward(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        inputs: &[&Observation],
        mode: Mode,
    ) -> Result<NodeId> {
        let batch = ObsBatch::from_observations(inputs)?;
        Gqn::forward(self, g, params, &batch, mode)
    }
}

/// `Q(s, ·) = onehot(s) · W + b`: a table expressed as a linear network, used
/// to check the DQN machinery against exact dynamic programming.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OneHotLinear {
    pub states: usize,
    pub actions: usize,
}

impl OneHotLinear {
    pub fn build(&self, seed: u64) -> Result<ParamSet> {
        init_params(
            &[(
                "q",
                LayerSpec::Dense {
                    inputs: self.states,
                    outputs: self.actions,
                },
            )],
            seed,
        )
    }
}

impl QNetwork for OneHotLinear {
    type Input = usize;

    fn action_count(&self) -> usize {
        self.actions
    }

    fn forward(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        inputs: &[&usize],
        _mode: Mode,
    ) -> Result<NodeId> {
        let mut data = alloc::vec![0.0; inputs.len() * self.states];
        for (row, &&s) in inputs.iter().enumerate() {
            if s >= self.states {
                return Err(Error::InvalidDimension(alloc::format!(
                    "state {s} outside 0..{}",
                    self.states
                )));
            }
            data[row * self.states + s] = 1.0;
        }
        let x = g.input(Tensor::new(alloc::vec![inputs.len(), self.states], data)?);
        g.dense(params, "q", x)
    }
}
