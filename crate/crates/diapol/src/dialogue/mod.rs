//! Domain types shared by the policies and the environment: atomic actions
//! and their encodings, binary dialogue states, user goals, and state-action
//! corpora with JSONL serialization.

mod action;
mod corpus;
mod goal;
mod state;

pub use action::{sort_actions_by_frequency, ActionSet, ActionSpace, AtomId, TwoHotAction};
pub use corpus::{Corpus, CorpusEntry, Split};
pub use goal::UserGoal;
pub use state::{DialogueState, StateLayout};
