//! Multi-label classification baseline: a three-layer MLP with per-atom
//! sigmoid outputs and a fixed decision threshold.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Optimizer, ParamStore, SeedRng, Tensor, Var};
use crate::dialogue::{ActionSet, ActionSpace, AtomId, DialogueState};
use crate::error::Result;
use crate::policy::common::{multi_hot_targets, state_row, Linear, TrainBatch};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiClassConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    /// An atom is predicted when its probability strictly exceeds this.
    pub threshold: f64,
}

impl Default for MultiClassConfig {
    fn default() -> Self {
        MultiClassConfig { hidden1: 192, hidden2: 192, threshold: 0.5 }
    }
}

#[derive(Clone, Debug)]
pub struct MultiClassPolicy {
    pub config: MultiClassConfig,
    pub state_dim: usize,
    pub space: ActionSpace,
    pub(crate) store: ParamStore,
    l1: Linear,
    l2: Linear,
    l3: Linear,
}

impl MultiClassPolicy {
    pub fn new(state_dim: usize, space: ActionSpace, config: MultiClassConfig, rng: &mut SeedRng) -> Self {
        let mut store = ParamStore::new();
        let l1 = Linear::new(&mut store, rng, "l1", state_dim, config.hidden1);
        let l2 = Linear::new(&mut store, rng, "l2", config.hidden1, config.hidden2);
        let l3 = Linear::new(&mut store, rng, "l3", config.hidden2, space.num_atoms());
        MultiClassPolicy { config, state_dim, space, store, l1, l2, l3 }
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Pre-sigmoid logits, B x m.
    fn logits(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let l1 = self.l1.bind(g, &self.store);
        let l2 = self.l2.bind(g, &self.store);
        let l3 = self.l3.bind(g, &self.store);
        let h1 = l1.forward(g, x)?;
        let h1 = g.tanh(h1)?;
        let h2 = l2.forward(g, h1)?;
        let h2 = g.tanh(h2)?;
        l3.forward(g, h2)
    }

    /// Per-atom probabilities for a batch of states.
    pub fn probabilities(&self, states: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(states.clone());
        let logits = self.logits(&mut g, x)?;
        let probs = g.sigmoid(logits)?;
        Ok(g.value(probs).clone())
    }

    /// Atoms whose probability strictly exceeds the threshold.
    pub fn predict(&self, state: &DialogueState) -> Result<ActionSet> {
        let probs = self.probabilities(&state_row(state))?;
        Ok(ActionSet::from_atoms(
            probs
                .data()
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > self.config.threshold)
                .map(|(i, _)| AtomId(i)),
        ))
    }

    /// One optimizer step of mean binary cross-entropy; returns the loss.
    pub fn train_step(&mut self, batch: &TrainBatch, opt: &mut Optimizer) -> Result<f64> {
        let targets = multi_hot_targets(&batch.actions, self.space.num_atoms());
        let mut g = Graph::new();
        let x = g.constant(batch.states.clone());
        let logits = self.logits(&mut g, x)?;
        let loss = g.bce_with_logits(logits, targets)?;
        let loss_value = g.scalar_value(loss)?;
        let grads = g.backward(loss)?;
        let param_grads = g.param_grads(&grads, &self.store);
        opt.step(&mut self.store, &param_grads)?;
        Ok(loss_value)
    }

    /// Mean loss without updating, for validation curves.
    pub fn loss(&self, batch: &TrainBatch) -> Result<f64> {
        let targets = multi_hot_targets(&batch.actions, self.space.num_atoms());
        let mut g = Graph::new();
        let x = g.constant(batch.states.clone());
        let logits = self.logits(&mut g, x)?;
        let loss = g.bce_with_logits(logits, targets)?;
        g.scalar_value(loss)
    }
}
