//! The scripted expert that generates demonstration corpora.

use crate::dialogue::{ActionSet, DialogueState};
use crate::env::episode::{Agent, Env};
use crate::env::tracker::TrackerState;
use crate::error::Result;

/// Rule cascade: answer every open user request with the matching inform,
/// book when the user has asked for it and an entity matches the belief,
/// otherwise ask the user for a constraint slot that is still unknown in the
/// active domain. Reads the tracker, not the encoded state.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExpertPolicy;

impl Agent for ExpertPolicy {
    fn act(&self, _state: &DialogueState, tracker: &TrackerState, env: &Env) -> Result<ActionSet> {
        let mut set = ActionSet::empty();

        for (domain, slot) in &tracker.open_requests {
            set.insert(env.space.lookup(&format!("{domain}-inform-{slot}"))?);
        }

        for domain in tracker.booking_requested.difference(&tracker.booking_done) {
            let belief = tracker.domain_belief(domain);
            if !env.world.filter(domain, &belief).is_empty() {
                set.insert(env.space.lookup(&format!("{domain}-book-none"))?);
            }
        }

        if set.is_empty() {
            let active = tracker
                .last_user_acts
                .first()
                .map(|a| a.domain().to_string())
                .unwrap_or_else(|| env.world.domains[0].name.clone());
            if let Ok(dom) = env.world.domain(&active) {
                let belief = tracker.domain_belief(&active);
                if let Some(slot) = dom.informable.iter().find(|s| !belief.contains_key(&s.slot)) {
                    set.insert(env.space.lookup(&format!("{active}-request-{}", slot.slot))?);
                }
            }
        }

        Ok(set)
    }
}
