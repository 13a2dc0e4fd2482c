//! Small building blocks shared by the policy models.

use serde::{Deserialize, Serialize};

use crate::autodiff::{xavier_uniform, Graph, ParamId, ParamStore, SeedRng, Tensor, Var};
use crate::dialogue::{ActionSet, ActionSpace, CorpusEntry, DialogueState};
use crate::error::{Error, Result};

/// A fully connected layer: ids of its weight and bias in the store.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, rng: &mut SeedRng, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let w = store.add(format!("{name}.w"), xavier_uniform(rng, fan_in, fan_out));
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[1, fan_out]));
        Linear { w, b }
    }

    /// Insert this layer's parameters into a graph once.
    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> BoundLinear {
        BoundLinear { w: g.param(store, self.w), b: g.param(store, self.b) }
    }
}

/// A [`Linear`] bound to one specific graph.
#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub w: Var,
    pub b: Var,
}

impl BoundLinear {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let xw = g.matmul(x, self.w)?;
        g.add_row(xw, self.b)
    }
}

/// A training batch: stacked states plus the target action sets.
#[derive(Clone, Debug)]
pub struct TrainBatch {
    pub states: Tensor,
    pub actions: Vec<ActionSet>,
}

impl TrainBatch {
    pub fn from_entries(entries: &[&CorpusEntry], space: &ActionSpace) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Train("empty batch".into()));
        }
        let dim = entries[0].state.dim();
        let mut data = Vec::with_capacity(entries.len() * dim);
        let mut actions = Vec::with_capacity(entries.len());
        for e in entries {
            if e.state.dim() != dim {
                return Err(Error::Train("inconsistent state dims in batch".into()));
            }
            data.extend(e.state.to_f64());
            actions.push(space.set_from_names(&e.actions)?);
        }
        Ok(TrainBatch { states: Tensor::matrix(entries.len(), dim, data)?, actions })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Stack one state into a 1 x D tensor.
pub fn state_row(state: &DialogueState) -> Tensor {
    Tensor::matrix(1, state.dim(), state.to_f64()).expect("bits are finite")
}

/// 0/1 multi-hot targets, one row per action set.
pub fn multi_hot_targets(actions: &[ActionSet], num_atoms: usize) -> Tensor {
    let mut data = Vec::with_capacity(actions.len() * num_atoms);
    for set in actions {
        data.extend(set.to_vector(num_atoms));
    }
    Tensor::matrix(actions.len(), num_atoms, data).expect("targets are finite")
}
