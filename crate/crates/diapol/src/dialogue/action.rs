//! Atomic actions, action sets, and their encodings.
//!
//! An atomic action is a `domain-acttype-slot` triple rendered as a single
//! string. A system turn emits a *set* of atoms; the set has three
//! interchangeable encodings:
//!
//! - a dense 0/1 vector over the atom inventory,
//! - a "two-hot" vector of per-atom status pairs (pair i is `(1,0)` when atom
//!   i is not selected and `(0,1)` when it is), used by the adversarial
//!   critic,
//! - an ordered path of atom ids terminated by the end symbol, used by the
//!   sequence decoder. Path order follows the action-frequency order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into [`ActionSpace::atoms`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AtomId(pub usize);

impl AtomId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The atom inventory plus the three decoder specials.
///
/// Decoder symbol ids: atoms occupy `0..m`, then `PAD = m`, `SOA = m + 1`,
/// `EOA = m + 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    atoms: Vec<String>,
    /// Rank permutation: `frequency_order[r]` is the atom at rank `r`.
    frequency_order: Vec<AtomId>,
}

impl ActionSpace {
    pub fn new(atoms: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for a in &atoms {
            if !seen.insert(a.clone()) {
                return Err(Error::UnknownAction(format!("duplicate atom `{a}`")));
            }
        }
        let order = (0..atoms.len()).map(AtomId).collect();
        Ok(ActionSpace { atoms, frequency_order: order })
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// Atoms plus PAD/SOA/EOA.
    pub fn vocab_size(&self) -> usize {
        self.atoms.len() + 3
    }

    pub fn pad_symbol(&self) -> usize {
        self.atoms.len()
    }

    pub fn soa_symbol(&self) -> usize {
        self.atoms.len() + 1
    }

    pub fn eoa_symbol(&self) -> usize {
        self.atoms.len() + 2
    }

    pub fn name(&self, id: AtomId) -> &str {
        &self.atoms[id.0]
    }

    pub fn atom_names(&self) -> &[String] {
        &self.atoms
    }

    pub fn lookup(&self, name: &str) -> Result<AtomId> {
        self.atoms
            .iter()
            .position(|a| a == name)
            .map(AtomId)
            .ok_or_else(|| Error::UnknownAction(name.to_string()))
    }

    /// Rank of an atom under the frequency order (0 = most frequent).
    pub fn rank(&self, id: AtomId) -> usize {
        self.frequency_order
            .iter()
            .position(|&a| a == id)
            .expect("frequency order is a permutation")
    }

    pub fn frequency_order(&self) -> &[AtomId] {
        &self.frequency_order
    }

    /// Install a frequency order; must be a permutation of the atoms.
    pub fn set_frequency_order(&mut self, order: Vec<AtomId>) -> Result<()> {
        let mut seen = vec![false; self.atoms.len()];
        if order.len() != self.atoms.len() {
            return Err(Error::UnknownAction(format!(
                "frequency order has {} entries for {} atoms",
                order.len(),
                self.atoms.len()
            )));
        }
        for &a in &order {
            if a.0 >= self.atoms.len() || seen[a.0] {
                return Err(Error::UnknownAction(format!(
                    "frequency order is not a permutation (atom {})",
                    a.0
                )));
            }
            seen[a.0] = true;
        }
        self.frequency_order = order;
        Ok(())
    }

    pub fn set_from_names<S: AsRef<str>>(&self, names: &[S]) -> Result<ActionSet> {
        let mut set = ActionSet::empty();
        for n in names {
            set.insert(self.lookup(n.as_ref())?);
        }
        Ok(set)
    }
}

/// A set of atomic actions (one system turn's output).
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct ActionSet(BTreeSet<AtomId>);

impl ActionSet {
    pub fn empty() -> Self {
        ActionSet(BTreeSet::new())
    }

    pub fn from_atoms(atoms: impl IntoIterator<Item = AtomId>) -> Self {
        ActionSet(atoms.into_iter().collect())
    }

    pub fn insert(&mut self, id: AtomId) {
        self.0.insert(id);
    }

    pub fn contains(&self, id: AtomId) -> bool {
        self.0.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = AtomId> + '_ {
        self.0.iter().copied()
    }

    pub fn names<'a>(&'a self, space: &'a ActionSpace) -> impl Iterator<Item = &'a str> + 'a {
        self.0.iter().map(|&id| space.name(id))
    }

    /// Dense {0,1}^m encoding.
    pub fn to_vector(&self, num_atoms: usize) -> Vec<f64> {
        let mut v = vec![0.0; num_atoms];
        for id in &self.0 {
            v[id.0] = 1.0;
        }
        v
    }

    pub fn from_vector(v: &[f64]) -> Result<Self> {
        let mut set = ActionSet::empty();
        for (i, &x) in v.iter().enumerate() {
            if x == 1.0 {
                set.insert(AtomId(i));
            } else if x != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "action vector entry {i} is {x}, expected 0 or 1"
                )));
            }
        }
        Ok(set)
    }

    /// Hard two-hot encoding (see [`TwoHotAction`]).
    pub fn to_two_hot(&self, num_atoms: usize) -> TwoHotAction {
        let mut values = vec![0.0; 2 * num_atoms];
        for i in 0..num_atoms {
            if self.contains(AtomId(i)) {
                values[2 * i + 1] = 1.0;
            } else {
                values[2 * i] = 1.0;
            }
        }
        TwoHotAction { values }
    }

    /// Atoms sorted by frequency rank, terminated by the EOA symbol.
    pub fn to_path(&self, space: &ActionSpace) -> Result<Vec<usize>> {
        for id in &self.0 {
            if id.0 >= space.num_atoms() {
                return Err(Error::UnknownAction(format!("atom id {}", id.0)));
            }
        }
        let mut atoms: Vec<AtomId> = self.0.iter().copied().collect();
        atoms.sort_by_key(|&a| space.rank(a));
        let mut path: Vec<usize> = atoms.into_iter().map(AtomId::index).collect();
        path.push(space.eoa_symbol());
        Ok(path)
    }

    /// Inverse of [`ActionSet::to_path`]: accepts an optional trailing EOA.
    pub fn from_path(path: &[usize], space: &ActionSpace) -> Result<Self> {
        let mut set = ActionSet::empty();
        for (i, &sym) in path.iter().enumerate() {
            if sym == space.eoa_symbol() {
                if i + 1 != path.len() {
                    return Err(Error::UnknownAction("EOA before end of path".into()));
                }
                break;
            }
            if sym >= space.num_atoms() {
                return Err(Error::UnknownAction(format!("symbol {sym} is not an atom")));
            }
            set.insert(AtomId(sym));
        }
        Ok(set)
    }
}

/// Per-atom status pairs concatenated in atom order; `2m` values total.
///
/// Pair `i` holds `(not-selected, selected)` scores. A *hard* two-hot has
/// exactly one `1.0` per pair; the soft form (from the Gumbel-Softmax
/// relaxation) has each pair summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoHotAction {
    values: Vec<f64>,
}

impl TwoHotAction {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "two-hot length {} is odd",
                values.len()
            )));
        }
        Ok(TwoHotAction { values })
    }

    pub fn num_atoms(&self) -> usize {
        self.values.len() / 2
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_hard(&self) -> bool {
        self.values.chunks(2).all(|p| {
            (p[0] == 0.0 && p[1] == 1.0) || (p[0] == 1.0 && p[1] == 0.0)
        })
    }

    /// Decode a hard two-hot back to the action set; soft inputs are an
    /// error (harden first).
    pub fn to_set(&self) -> Result<ActionSet> {
        if !self.is_hard() {
            return Err(Error::InvalidArgument(
                "two-hot vector is not hard; cannot decode to a set".into(),
            ));
        }
        let mut set = ActionSet::empty();
        for (i, pair) in self.values.chunks(2).enumerate() {
            if pair[1] == 1.0 {
                set.insert(AtomId(i));
            }
        }
        Ok(set)
    }
}

/// Atoms ordered by descending count over the corpus train split, ties
/// broken lexicographically by rendered name.
pub fn sort_actions_by_frequency(
    counts: &BTreeMap<String, usize>,
    space: &ActionSpace,
) -> Vec<AtomId> {
    let mut order: Vec<AtomId> = (0..space.num_atoms()).map(AtomId).collect();
    order.sort_by(|&a, &b| {
        let ca = counts.get(space.name(a)).copied().unwrap_or(0);
        let cb = counts.get(space.name(b)).copied().unwrap_or(0);
        cb.cmp(&ca).then_with(|| space.name(a).cmp(space.name(b)))
    });
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space3() -> ActionSpace {
        ActionSpace::new(vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    #[test]
    fn specials_follow_atoms() {
        let s = space3();
        assert_eq!(s.pad_symbol(), 3);
        assert_eq!(s.soa_symbol(), 4);
        assert_eq!(s.eoa_symbol(), 5);
        assert_eq!(s.vocab_size(), 6);
    }

    #[test]
    fn frequency_sort_orders_by_count_then_name() {
        let s = space3();
        let counts = BTreeMap::from([("a".to_string(), 5), ("b".to_string(), 2), ("c".to_string(), 9)]);
        let order = sort_actions_by_frequency(&counts, &s);
        let names: Vec<_> = order.iter().map(|&id| s.name(id)).collect();
        assert_eq!(names, ["c", "a", "b"]);

        let tied = BTreeMap::from([("a".to_string(), 3), ("b".to_string(), 3), ("c".to_string(), 0)]);
        let order = sort_actions_by_frequency(&tied, &s);
        let names: Vec<_> = order.iter().map(|&id| s.name(id)).collect();
        assert_eq!(names, ["a", "b", "c"]);
    }

    #[test]
    fn empty_set_path_is_just_eoa() {
        let s = space3();
        assert_eq!(ActionSet::empty().to_path(&s).unwrap(), vec![s.eoa_symbol()]);
    }

    #[test]
    fn path_follows_frequency_order() {
        let mut s = space3();
        // c most frequent, then a, then b
        s.set_frequency_order(vec![AtomId(2), AtomId(0), AtomId(1)]).unwrap();
        let set = ActionSet::from_atoms([AtomId(0), AtomId(2)]);
        assert_eq!(set.to_path(&s).unwrap(), vec![2, 0, s.eoa_symbol()]);
    }

    #[test]
    fn two_hot_examples() {
        let set = ActionSet::from_atoms([AtomId(1)]);
        assert_eq!(set.to_two_hot(2).values(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(ActionSet::empty().to_two_hot(3).values(), &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn soft_two_hot_refuses_decoding() {
        let soft = TwoHotAction::from_values(vec![0.4, 0.6]).unwrap();
        assert!(soft.to_set().is_err());
    }

    #[test]
    fn unknown_name_is_an_error() {
        let s = space3();
        assert!(s.set_from_names(&["zzz"]).is_err());
    }

    proptest! {
        #[test]
        fn set_vector_twohot_path_round_trips(mask in proptest::collection::vec(any::<bool>(), 8)) {
            let names: Vec<String> = (0..8).map(|i| format!("atom{i}")).collect();
            let mut space = ActionSpace::new(names).unwrap();
            // a scrambled but fixed frequency order
            space.set_frequency_order(vec![3, 6, 0, 7, 2, 5, 1, 4].into_iter().map(AtomId).collect()).unwrap();
            let set = ActionSet::from_atoms(
                mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| AtomId(i)),
            );

            let vec = set.to_vector(8);
            prop_assert_eq!(ActionSet::from_vector(&vec).unwrap(), set.clone());

            let two_hot = set.to_two_hot(8);
            prop_assert!(two_hot.is_hard());
            prop_assert_eq!(two_hot.to_set().unwrap(), set.clone());

            let path = set.to_path(&space).unwrap();
            // strictly increasing rank, EOA-terminated
            let ranks: Vec<usize> = path[..path.len() - 1].iter().map(|&s| space.rank(AtomId(s))).collect();
            prop_assert!(ranks.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(*path.last().unwrap(), space.eoa_symbol());
            prop_assert_eq!(ActionSet::from_path(&path, &space).unwrap(), set);
        }
    }
}
