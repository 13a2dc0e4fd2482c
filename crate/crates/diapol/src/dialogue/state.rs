//! Binary dialogue state vectors.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-width binary feature vector fed to every policy.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DialogueState {
    bits: Vec<u8>,
}

impl DialogueState {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::InvalidArgument(format!(
                "state bit {pos} is {}, expected 0 or 1",
                bits[pos]
            )));
        }
        Ok(DialogueState { bits })
    }

    pub fn zeros(dim: usize) -> Self {
        DialogueState { bits: vec![0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn set(&mut self, idx: usize) {
        self.bits[idx] = 1;
    }

    /// Row-major f64 view for feeding a network (a single row).
    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| b as f64).collect()
    }
}

/// The four named contiguous segments of the state vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub query_result: Range<usize>,
    pub last_user_action: Range<usize>,
    pub last_system_action: Range<usize>,
    pub belief: Range<usize>,
}

impl StateLayout {
    /// Consecutive segments with the given widths, starting at zero.
    pub fn from_widths(query: usize, user: usize, system: usize, belief: usize) -> Self {
        let a = query;
        let b = a + user;
        let c = b + system;
        let d = c + belief;
        StateLayout {
            query_result: 0..a,
            last_user_action: a..b,
            last_system_action: b..c,
            belief: c..d,
        }
    }

    pub fn total_dim(&self) -> usize {
        self.belief.end
    }

    /// The segments must partition `[0, total_dim)` in order.
    pub fn validate(&self) -> Result<()> {
        let segs = [
            &self.query_result,
            &self.last_user_action,
            &self.last_system_action,
            &self.belief,
        ];
        let mut cursor = 0;
        for s in segs {
            if s.start != cursor {
                return Err(Error::Env(format!(
                    "state layout gap/overlap at {} (segment starts at {})",
                    cursor, s.start
                )));
            }
            cursor = s.end;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_binary_bits() {
        assert!(DialogueState::from_bits(vec![0, 1, 2]).is_err());
        assert!(DialogueState::from_bits(vec![0, 1, 1]).is_ok());
    }

    #[test]
    fn layout_partitions_dimension() {
        let l = StateLayout::from_widths(4, 10, 12, 30);
        l.validate().unwrap();
        assert_eq!(l.total_dim(), 56);
    }
}
