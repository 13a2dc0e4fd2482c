//! Rule-based dialogue state tracking and state vector encoding.

use std::collections::{BTreeMap, BTreeSet};

use crate::dialogue::{ActionSet, DialogueState, StateLayout};
use crate::env::agenda::UserAct;
use crate::env::schema::{result_bucket, World, RESULT_BUCKETS};

/// Everything the system side knows, as a deterministic function of the
/// dialogue-act history.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrackerState {
    /// domain -> slot -> latest user-informed value (later informs win).
    pub belief: BTreeMap<String, BTreeMap<String, String>>,
    /// User requests not yet answered by a system inform.
    pub open_requests: BTreeSet<(String, String)>,
    /// Domains where the user asked for a booking.
    pub booking_requested: BTreeSet<String>,
    /// Domains where a grounded booking went through. A renewed user book
    /// request clears the flag (the user was not satisfied).
    pub booking_done: BTreeSet<String>,
    pub last_user_acts: Vec<UserAct>,
    pub last_system_action: ActionSet,
}

impl TrackerState {
    pub fn fresh() -> Self {
        TrackerState::default()
    }

    /// Fold one user turn into the tracker.
    pub fn observe_user(&mut self, acts: &[UserAct]) {
        for act in acts {
            match act {
                UserAct::Inform { domain, slot, value } => {
                    self.belief
                        .entry(domain.clone())
                        .or_default()
                        .insert(slot.clone(), value.clone());
                }
                UserAct::Request { domain, slot } => {
                    self.open_requests.insert((domain.clone(), slot.clone()));
                }
                UserAct::Book { domain } => {
                    self.booking_requested.insert(domain.clone());
                    self.booking_done.remove(domain);
                }
            }
        }
        self.last_user_acts = acts.to_vec();
    }

    /// Fold the system's own grounded turn into the tracker.
    pub fn observe_system(
        &mut self,
        action: &ActionSet,
        informed: &[(String, String, String)],
        booked_ok: &[String],
    ) {
        for (domain, slot, _) in informed {
            self.open_requests.remove(&(domain.clone(), slot.clone()));
        }
        for domain in booked_ok {
            self.booking_done.insert(domain.clone());
        }
        self.last_system_action = action.clone();
    }

    /// Current belief constraints for one domain (empty if none).
    pub fn domain_belief(&self, domain: &str) -> BTreeMap<String, String> {
        self.belief.get(domain).cloned().unwrap_or_default()
    }

    /// Match count of the belief against the database; `None` when the
    /// domain has no constraints yet (no query has been run).
    pub fn query_count(&self, world: &World, domain: &str) -> Option<usize> {
        let belief = self.belief.get(domain)?;
        if belief.is_empty() {
            return None;
        }
        Some(world.filter(domain, belief).len())
    }
}

/// Derive the state layout implied by a world's schema.
///
/// Segment order: result-count buckets (one-hot per domain), last user
/// action bits, last system action bits (one per atom), belief one-hots
/// (per informable slot: unknown + each value) plus booking-requested and
/// booking-done bits for bookable domains.
pub fn derive_layout(world: &World, num_atoms: usize) -> StateLayout {
    let query = RESULT_BUCKETS * world.domains.len();
    let user: usize = world
        .domains
        .iter()
        .map(|d| d.informable.len() + d.requestable.len() + usize::from(d.bookable))
        .sum();
    let belief: usize = world
        .domains
        .iter()
        .map(|d| {
            d.informable.iter().map(|s| s.values.len() + 1).sum::<usize>()
                + if d.bookable { 2 } else { 0 }
        })
        .sum();
    StateLayout::from_widths(query, user, num_atoms, belief)
}

/// Encode the tracker into the binary state vector.
pub fn encode_state(tracker: &TrackerState, world: &World, layout: &StateLayout) -> DialogueState {
    let mut state = DialogueState::zeros(layout.total_dim());

    // result-count buckets; bucket 0 doubles as "no query yet"
    let mut offset = layout.query_result.start;
    for d in &world.domains {
        let bucket = tracker
            .query_count(world, &d.name)
            .map(result_bucket)
            .unwrap_or(0);
        state.set(offset + bucket);
        offset += RESULT_BUCKETS;
    }

    // last user action
    let mut offset = layout.last_user_action.start;
    for d in &world.domains {
        for (i, s) in d.informable.iter().enumerate() {
            if tracker.last_user_acts.iter().any(|a| {
                matches!(a, UserAct::Inform { domain, slot, .. } if domain == &d.name && slot == &s.slot)
            }) {
                state.set(offset + i);
            }
        }
        let req_base = offset + d.informable.len();
        for (i, s) in d.requestable.iter().enumerate() {
            if tracker.last_user_acts.iter().any(|a| {
                matches!(a, UserAct::Request { domain, slot } if domain == &d.name && slot == s)
            }) {
                state.set(req_base + i);
            }
        }
        if d.bookable {
            let book_bit = req_base + d.requestable.len();
            if tracker
                .last_user_acts
                .iter()
                .any(|a| matches!(a, UserAct::Book { domain } if domain == &d.name))
            {
                state.set(book_bit);
            }
        }
        offset += d.informable.len() + d.requestable.len() + usize::from(d.bookable);
    }

    // last system action
    for atom in tracker.last_system_action.iter() {
        state.set(layout.last_system_action.start + atom.index());
    }

    // belief
    let mut offset = layout.belief.start;
    for d in &world.domains {
        let belief = tracker.belief.get(&d.name);
        for s in &d.informable {
            let idx = belief
                .and_then(|b| b.get(&s.slot))
                .and_then(|v| s.values.iter().position(|x| x == v))
                .map(|i| i + 1)
                .unwrap_or(0);
            state.set(offset + idx);
            offset += s.values.len() + 1;
        }
        if d.bookable {
            if tracker.booking_requested.contains(&d.name) {
                state.set(offset);
            }
            if tracker.booking_done.contains(&d.name) {
                state.set(offset + 1);
            }
            offset += 2;
        }
    }

    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::schema::derive_action_space;

    fn setup() -> (World, StateLayout) {
        let world = World::default_synthetic();
        let (space, _) = derive_action_space(&world);
        let layout = derive_layout(&world, space.num_atoms());
        (world, layout)
    }

    #[test]
    fn layout_widths_sum_to_dimension() {
        let (world, layout) = setup();
        layout.validate().unwrap();
        // 12 query bits + 23 user bits + 23 atoms + belief
        let belief: usize = world
            .domains
            .iter()
            .map(|d| {
                d.informable.iter().map(|s| s.values.len() + 1).sum::<usize>()
                    + if d.bookable { 2 } else { 0 }
            })
            .sum();
        assert_eq!(layout.total_dim(), 12 + 23 + 23 + belief);
    }

    #[test]
    fn fresh_tracker_sets_only_no_query_buckets_and_unknown_beliefs() {
        let (world, layout) = setup();
        let state = encode_state(&TrackerState::fresh(), &world, &layout);
        // bucket 0 of each domain
        for (di, _) in world.domains.iter().enumerate() {
            assert_eq!(state.bits()[layout.query_result.start + di * RESULT_BUCKETS], 1);
        }
        // user/system segments all zero
        assert!(state.bits()[layout.last_user_action.clone()].iter().all(|&b| b == 0));
        assert!(state.bits()[layout.last_system_action.clone()].iter().all(|&b| b == 0));
    }

    #[test]
    fn later_inform_overwrites_earlier() {
        let (world, _) = setup();
        let mut t = TrackerState::fresh();
        t.observe_user(&[UserAct::Inform {
            domain: "restaurant".into(),
            slot: "food".into(),
            value: "thai".into(),
        }]);
        assert_eq!(t.domain_belief("restaurant")["food"], "thai");
        t.observe_user(&[UserAct::Inform {
            domain: "restaurant".into(),
            slot: "food".into(),
            value: "indian".into(),
        }]);
        assert_eq!(t.domain_belief("restaurant")["food"], "indian");
        let _ = world;
    }

    #[test]
    fn query_count_matches_direct_filter() {
        let (world, _) = setup();
        let mut t = TrackerState::fresh();
        assert_eq!(t.query_count(&world, "hotel"), None);
        t.observe_user(&[
            UserAct::Inform { domain: "hotel".into(), slot: "area".into(), value: "north".into() },
            UserAct::Inform { domain: "hotel".into(), slot: "stars".into(), value: "4".into() },
        ]);
        let direct = world.filter("hotel", &t.domain_belief("hotel")).len();
        assert_eq!(t.query_count(&world, "hotel"), Some(direct));
    }

    #[test]
    fn identical_trackers_encode_identically() {
        let (world, layout) = setup();
        let mut a = TrackerState::fresh();
        let mut b = TrackerState::fresh();
        let acts = vec![UserAct::Request { domain: "hotel".into(), slot: "phone".into() }];
        a.observe_user(&acts);
        b.observe_user(&acts);
        assert_eq!(encode_state(&a, &world, &layout), encode_state(&b, &world, &layout));
    }
}
