//! Simulator-free dialogue policy learning on a synthetic multi-domain
//! environment.
//!
//! The crate has three layers:
//!
//! - [`autodiff`]: a small dense-tensor reverse-mode differentiation engine
//!   (f64 throughout) with SGD/Adam and a seeded, platform-stable RNG.
//! - [`dialogue`], [`env`], [`metrics`]: domain types (states, atomic actions,
//!   goals, corpora), a rule-based user/tracker/expert environment that
//!   generates expert corpora, and goal-conditioned evaluation.
//! - [`policy`], [`adversarial`], [`exp`]: the four policy models
//!   (multi-label classifier, per-action dense heads, sequential action
//!   decoder with beam search, and a Gumbel-Softmax adversarial generator),
//!   the critic training loop, and the experiment runner behind the CLI.
//!
//! Everything is deterministic given a seed: reruns of any command with the
//! same config reproduce output files byte for byte.

pub mod adversarial;
pub mod autodiff;
pub mod dialogue;
pub mod env;
pub mod error;
pub mod exec;
pub mod exp;
pub mod metrics;
pub mod policy;

pub use error::{Error, Result};
