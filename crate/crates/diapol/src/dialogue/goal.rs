//! User goals: what the user wants to constrain, learn, and book.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-domain constraints, requested slots, and booking requirements.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserGoal {
    /// domain -> slot -> required value.
    pub constraints: BTreeMap<String, BTreeMap<String, String>>,
    /// domain -> slots the user asks for.
    pub requests: BTreeMap<String, BTreeSet<String>>,
    /// Domains in which the user wants a booking.
    pub bookings: BTreeSet<String>,
}

impl UserGoal {
    /// Domains touched by the goal, in sorted order.
    pub fn domains(&self) -> Vec<String> {
        let mut ds: BTreeSet<String> = self.constraints.keys().cloned().collect();
        ds.extend(self.requests.keys().cloned());
        ds.extend(self.bookings.iter().cloned());
        ds.into_iter().collect()
    }

    pub fn total_requests(&self) -> usize {
        self.requests.values().map(BTreeSet::len).sum()
    }

    /// At least one domain must request something.
    pub fn validate(&self) -> Result<()> {
        if self.requests.values().all(BTreeSet::is_empty) {
            return Err(Error::Env("goal requests nothing in any domain".into()));
        }
        Ok(())
    }
}
