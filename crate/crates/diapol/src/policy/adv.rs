//! The adversarial action generator: per-action dense heads sampled through
//! Gumbel-Softmax with straight-through hardening.
//!
//! The forward sample is always a hard two-hot vector (one 1 per status
//! pair); gradients reach the dense-head parameters through the soft
//! relaxation. With zero injected noise the hard sample coincides with the
//! dense policy's deterministic prediction.

use serde::{Deserialize, Serialize};

use crate::autodiff::{gumbel_noise, Graph, SeedRng, Tensor, Var};
use crate::dialogue::{ActionSet, DialogueState, TwoHotAction};
use crate::error::Result;
use crate::policy::common::state_row;
use crate::policy::multidense::MultiDensePolicy;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvConfig {
    /// Gumbel-Softmax temperature.
    pub tau: f64,
}

impl Default for AdvConfig {
    fn default() -> Self {
        AdvConfig { tau: 0.005 }
    }
}

#[derive(Clone, Debug)]
pub struct AdvGenerator {
    pub dense: MultiDensePolicy,
    pub tau: f64,
}

impl AdvGenerator {
    pub fn new(dense: MultiDensePolicy, config: AdvConfig) -> Self {
        AdvGenerator { dense, tau: config.tau }
    }

    /// Gumbel noise matching one generation over a batch of `rows` states.
    pub fn sample_noise(&self, rng: &mut SeedRng, rows: usize) -> Tensor {
        gumbel_noise(rng, rows * self.dense.space.num_atoms(), 2)
    }

    /// Differentiable generation: hard two-hot rows (B x 2m) whose backward
    /// path is the Gumbel-Softmax relaxation. `noise` must be
    /// (B * m) x 2 (use [`AdvGenerator::sample_noise`], or zeros in tests).
    pub fn generate(&self, g: &mut Graph, states: &Tensor, noise: &Tensor) -> Result<Var> {
        let m = self.dense.space.num_atoms();
        let rows = states.rows();
        let x = g.constant(states.clone());
        let logits = self.dense.head_logits(g, x)?;
        let pairs = g.reshape(logits, &[rows * m, 2])?;
        let log_p = g.log_softmax_rows(pairs)?;
        let noise = g.constant(noise.clone());
        let soft = g.gumbel_softmax(log_p, self.tau, noise)?;
        let hard = g.straight_through_rows(soft)?;
        g.reshape(hard, &[rows, 2 * m])
    }

    /// Non-differentiable sampling for critic batches and inspection.
    pub fn sample(&self, states: &Tensor, rng: &mut SeedRng) -> Result<Tensor> {
        let noise = self.sample_noise(rng, states.rows());
        let mut g = Graph::new();
        let out = self.generate(&mut g, states, &noise)?;
        Ok(g.value(out).clone())
    }

    /// One state's sampled action as a typed two-hot.
    pub fn sample_one(&self, state: &DialogueState, rng: &mut SeedRng) -> Result<TwoHotAction> {
        let t = self.sample(&state_row(state), rng)?;
        TwoHotAction::from_values(t.data().to_vec())
    }

    /// Deterministic prediction (the noise-free hard sample, which equals
    /// the dense policy's decision rule).
    pub fn predict(&self, state: &DialogueState) -> Result<ActionSet> {
        self.dense.predict(state)
    }
}
