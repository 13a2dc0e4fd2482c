//! Synthetic multi-domain dialogue environment: entity database, goal
//! sampler, agenda-based rule user, rule-based tracker, scripted expert, and
//! the episode loop with the handcrafted reward statistic.

mod agenda;
mod episode;
mod expert;
mod schema;
mod tracker;

pub use agenda::{SystemEffects, UserAct, UserAgenda};
pub use episode::{
    generate_corpus, read_episode_logs, run_episode, run_sampled_episode, sample_goal,
    write_episode_logs, Agent, Booking, Env, EpisodeLog, Offer, Termination, TurnRecord,
    DEFAULT_MAX_TURNS,
};
pub use expert::ExpertPolicy;
pub use schema::{
    derive_action_space, result_bucket, ActKind, DomainDef, Entity, ParsedAtom, SlotValues, World,
    RESULT_BUCKETS,
};
pub use tracker::{derive_layout, encode_state, TrackerState};
