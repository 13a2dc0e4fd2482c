//! Per-action dense heads over a shared feature extractor.
//!
//! A two-layer MLP maps the state to a feature vector; every atom then owns
//! an independent 2-logit head (status 0 = not selected, status 1 =
//! selected). The heads live in one feature x 2m matrix whose column pairs
//! are disjoint per atom, which is arithmetically identical to m separate
//! dense layers and counts the same parameters.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Optimizer, ParamStore, SeedRng, Tensor, Var};
use crate::dialogue::{ActionSet, ActionSpace, AtomId, DialogueState};
use crate::error::Result;
use crate::policy::common::{state_row, Linear, TrainBatch};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiDenseConfig {
    pub hidden: usize,
    pub feature: usize,
}

impl Default for MultiDenseConfig {
    fn default() -> Self {
        MultiDenseConfig { hidden: 192, feature: 64 }
    }
}

#[derive(Clone, Debug)]
pub struct MultiDensePolicy {
    pub config: MultiDenseConfig,
    pub state_dim: usize,
    pub space: ActionSpace,
    pub(crate) store: ParamStore,
    l1: Linear,
    l2: Linear,
    heads: Linear,
}

impl MultiDensePolicy {
    pub fn new(state_dim: usize, space: ActionSpace, config: MultiDenseConfig, rng: &mut SeedRng) -> Self {
        let mut store = ParamStore::new();
        let l1 = Linear::new(&mut store, rng, "l1", state_dim, config.hidden);
        let l2 = Linear::new(&mut store, rng, "l2", config.hidden, config.feature);
        let heads = Linear::new(&mut store, rng, "heads", config.feature, 2 * space.num_atoms());
        MultiDensePolicy { config, state_dim, space, store, l1, l2, heads }
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Head logits, B x 2m: columns (2i, 2i+1) are atom i's
    /// (not-selected, selected) pair.
    pub fn head_logits(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let l1 = self.l1.bind(g, &self.store);
        let l2 = self.l2.bind(g, &self.store);
        let heads = self.heads.bind(g, &self.store);
        let h = l1.forward(g, x)?;
        let h = g.tanh(h)?;
        let f = l2.forward(g, h)?;
        let f = g.tanh(f)?;
        heads.forward(g, f)
    }

    pub fn head_logit_values(&self, states: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(states.clone());
        let logits = self.head_logits(&mut g, x)?;
        Ok(g.value(logits).clone())
    }

    /// Per head, the larger logit wins; ties go to "not selected".
    pub fn predict(&self, state: &DialogueState) -> Result<ActionSet> {
        let logits = self.head_logit_values(&state_row(state))?;
        Ok(decide_from_head_logits(logits.data()))
    }

    /// One optimizer step of mean per-head softmax cross-entropy (target
    /// index = the atom's selected/not-selected status).
    pub fn train_step(&mut self, batch: &TrainBatch, opt: &mut Optimizer) -> Result<f64> {
        let mut g = Graph::new();
        let loss = self.loss_node(&mut g, batch)?;
        let loss_value = g.scalar_value(loss)?;
        let grads = g.backward(loss)?;
        let param_grads = g.param_grads(&grads, &self.store);
        opt.step(&mut self.store, &param_grads)?;
        Ok(loss_value)
    }

    pub fn loss(&self, batch: &TrainBatch) -> Result<f64> {
        let mut g = Graph::new();
        let loss = self.loss_node(&mut g, batch)?;
        g.scalar_value(loss)
    }

    fn loss_node(&self, g: &mut Graph, batch: &TrainBatch) -> Result<Var> {
        let m = self.space.num_atoms();
        let x = g.constant(batch.states.clone());
        let logits = self.head_logits(g, x)?;
        // one row per head decision
        let rows = g.reshape(logits, &[batch.len() * m, 2])?;
        let log_probs = g.log_softmax_rows(rows)?;
        let mut targets = Vec::with_capacity(batch.len() * m);
        for set in &batch.actions {
            for atom in 0..m {
                targets.push(usize::from(set.contains(AtomId(atom))));
            }
        }
        let picked = g.pick(log_probs, &targets)?;
        let mean = g.mean_all(picked)?;
        g.scale(mean, -1.0)
    }
}

/// Shared decision rule on a 2m head-logit row.
pub fn decide_from_head_logits(logits: &[f64]) -> ActionSet {
    ActionSet::from_atoms(
        logits
            .chunks(2)
            .enumerate()
            .filter(|(_, pair)| pair[1] > pair[0])
            .map(|(i, _)| AtomId(i)),
    )
}
