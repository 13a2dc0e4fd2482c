//! The rule user: an agenda stack derived from a sampled goal.
//!
//! The user works through goal domains one at a time. Within a domain,
//! informs are delivered first (popped as they are spoken), then every
//! still-unanswered request is re-issued each turn until the system informs
//! it, then the booking is requested until the system books an entity that
//! actually satisfies the domain's constraints. The user never lies and
//! never changes the goal mid-episode.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::dialogue::UserGoal;

/// One user dialogue act.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "act", rename_all = "lowercase")]
pub enum UserAct {
    Inform { domain: String, slot: String, value: String },
    Request { domain: String, slot: String },
    /// "please book it" for a domain.
    Book { domain: String },
}

impl UserAct {
    pub fn domain(&self) -> &str {
        match self {
            UserAct::Inform { domain, .. }
            | UserAct::Request { domain, .. }
            | UserAct::Book { domain } => domain,
        }
    }
}

/// What the system's last turn actually did, after grounding against the
/// entity database.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SystemEffects {
    /// (domain, slot, value) the system informed.
    pub informed: Vec<(String, String, String)>,
    /// Per domain, the informable values of the entity the informs were
    /// grounded in this turn.
    pub offered: Vec<(String, BTreeMap<String, String>)>,
    /// Bookings attempted this turn: domain plus the booked entity's
    /// informable values (`None` when no entity matched the belief).
    pub booked: Vec<(String, Option<BTreeMap<String, String>>)>,
}

#[derive(Clone, Debug)]
struct DomainAgenda {
    domain: String,
    informs: VecDeque<(String, String)>,
    requests: BTreeSet<String>,
    booking: bool,
}

impl DomainAgenda {
    fn done(&self) -> bool {
        self.informs.is_empty() && self.requests.is_empty() && !self.booking
    }
}

#[derive(Clone, Debug)]
pub struct UserAgenda {
    goal: UserGoal,
    domains: Vec<DomainAgenda>,
    informs_per_turn: usize,
}

impl UserAgenda {
    pub fn new(goal: UserGoal, informs_per_turn: usize) -> Self {
        let domains = goal
            .domains()
            .into_iter()
            .map(|d| DomainAgenda {
                informs: goal
                    .constraints
                    .get(&d)
                    .map(|m| m.iter().map(|(s, v)| (s.clone(), v.clone())).collect())
                    .unwrap_or_default(),
                requests: goal.requests.get(&d).cloned().unwrap_or_default(),
                booking: goal.bookings.contains(&d),
                domain: d,
            })
            .collect();
        UserAgenda { goal, domains, informs_per_turn: informs_per_turn.max(1) }
    }

    pub fn goal(&self) -> &UserGoal {
        &self.goal
    }

    pub fn is_done(&self) -> bool {
        self.domains.iter().all(DomainAgenda::done)
    }

    fn consistent(&self, domain: &str, values: &BTreeMap<String, String>) -> bool {
        self.goal
            .constraints
            .get(domain)
            .map(|cs| cs.iter().all(|(s, v)| values.get(s) == Some(v)))
            .unwrap_or(true)
    }

    /// Absorb the system's grounded turn. An inform answers a matching
    /// request only when it was grounded in an entity satisfying the
    /// domain's constraints (the user notices answers about the wrong
    /// entity and keeps asking); a booking is accepted under the same rule.
    pub fn observe(&mut self, effects: &SystemEffects) {
        for (domain, slot, _value) in &effects.informed {
            let grounded_ok = effects
                .offered
                .iter()
                .find(|(d, _)| d == domain)
                .map(|(_, values)| self.consistent(domain, values))
                .unwrap_or(false);
            if !grounded_ok {
                continue;
            }
            if let Some(d) = self.domains.iter_mut().find(|d| &d.domain == domain) {
                d.requests.remove(slot);
            }
        }
        for (domain, values) in &effects.booked {
            let Some(values) = values else { continue };
            if !self.consistent(domain, values) {
                continue;
            }
            if let Some(d) = self.domains.iter_mut().find(|d| &d.domain == domain) {
                d.booking = false;
            }
        }
    }

    /// The user's next utterance. Empty when the agenda is exhausted.
    pub fn emit(&mut self) -> Vec<UserAct> {
        let Some(d) = self.domains.iter_mut().find(|d| !d.done()) else {
            return Vec::new();
        };
        if !d.informs.is_empty() {
            let mut acts = Vec::new();
            for _ in 0..self.informs_per_turn.min(d.informs.len()) {
                let (slot, value) = d.informs.pop_front().expect("non-empty");
                acts.push(UserAct::Inform { domain: d.domain.clone(), slot, value });
            }
            return acts;
        }
        if !d.requests.is_empty() {
            return d
                .requests
                .iter()
                .map(|s| UserAct::Request { domain: d.domain.clone(), slot: s.clone() })
                .collect();
        }
        vec![UserAct::Book { domain: d.domain.clone() }]
    }

    /// One user step: observe the system turn, then speak.
    /// Returns the user's acts and whether the goal is now satisfied.
    pub fn step(&mut self, effects: &SystemEffects) -> (Vec<UserAct>, bool) {
        self.observe(effects);
        if self.is_done() {
            return (Vec::new(), true);
        }
        (self.emit(), false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn goal_one_domain() -> UserGoal {
        let mut goal = UserGoal::default();
        goal.constraints.insert(
            "restaurant".into(),
            BTreeMap::from([
                ("food".to_string(), "thai".to_string()),
                ("area".to_string(), "east".to_string()),
            ]),
        );
        goal.requests
            .insert("restaurant".into(), BTreeSet::from(["phone".to_string()]));
        goal.bookings.insert("restaurant".into());
        goal
    }

    #[test]
    fn informs_pop_then_requests_then_booking() {
        let mut agenda = UserAgenda::new(goal_one_domain(), 2);
        let opening = agenda.emit();
        assert_eq!(opening.len(), 2);
        assert!(matches!(opening[0], UserAct::Inform { .. }));

        // nothing useful from the system: user moves to requests
        let (acts, done) = agenda.step(&SystemEffects::default());
        assert!(!done);
        assert_eq!(
            acts,
            vec![UserAct::Request { domain: "restaurant".into(), slot: "phone".into() }]
        );

        // still nothing: the unanswered request is repeated verbatim
        let (acts2, _) = agenda.step(&SystemEffects::default());
        assert_eq!(acts, acts2);
    }

    fn matching_offer() -> (String, BTreeMap<String, String>) {
        (
            "restaurant".into(),
            BTreeMap::from([
                ("food".to_string(), "thai".to_string()),
                ("area".to_string(), "east".to_string()),
            ]),
        )
    }

    #[test]
    fn answered_request_leaves_the_agenda() {
        let mut agenda = UserAgenda::new(goal_one_domain(), 4);
        agenda.emit(); // deliver both informs at once
        let inform_phone = SystemEffects {
            informed: vec![("restaurant".into(), "phone".into(), "123".into())],
            offered: vec![matching_offer()],
            booked: vec![],
        };
        let (acts, done) = agenda.step(&inform_phone);
        assert!(!done);
        // request satisfied, so the user asks for the booking next
        assert_eq!(acts, vec![UserAct::Book { domain: "restaurant".into() }]);
    }

    #[test]
    fn wrong_entity_answer_is_ignored() {
        let mut agenda = UserAgenda::new(goal_one_domain(), 4);
        agenda.emit();
        let wrong = SystemEffects {
            informed: vec![("restaurant".into(), "phone".into(), "123".into())],
            offered: vec![(
                "restaurant".into(),
                BTreeMap::from([
                    ("food".to_string(), "italian".to_string()),
                    ("area".to_string(), "east".to_string()),
                ]),
            )],
            booked: vec![],
        };
        let (acts, done) = agenda.step(&wrong);
        assert!(!done);
        // the request is re-issued, not satisfied
        assert_eq!(
            acts,
            vec![UserAct::Request { domain: "restaurant".into(), slot: "phone".into() }]
        );
    }

    #[test]
    fn inconsistent_booking_is_rejected_consistent_is_accepted() {
        let mut agenda = UserAgenda::new(goal_one_domain(), 4);
        agenda.emit();
        let (_, _) = agenda.step(&SystemEffects {
            informed: vec![("restaurant".into(), "phone".into(), "123".into())],
            offered: vec![matching_offer()],
            booked: vec![],
        });

        // wrong area: booking stays pending
        let bad = SystemEffects {
            booked: vec![(
                "restaurant".into(),
                Some(BTreeMap::from([
                    ("food".to_string(), "thai".to_string()),
                    ("area".to_string(), "west".to_string()),
                ])),
            )],
            ..Default::default()
        };
        let (acts, done) = agenda.step(&bad);
        assert!(!done);
        assert_eq!(acts, vec![UserAct::Book { domain: "restaurant".into() }]);

        let good = SystemEffects {
            booked: vec![("restaurant".into(), Some(matching_offer().1))],
            ..Default::default()
        };
        let (acts, done) = agenda.step(&good);
        assert!(done);
        assert!(acts.is_empty());
    }
}
