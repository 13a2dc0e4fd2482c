//! Domain schemas and the entity database.
//!
//! A world is a set of domains (informable slots with finite value sets,
//! requestable slots, a bookable flag) plus one entity table per domain.
//! The built-in synthetic world is a fixed constant: three domains, four
//! informable and three requestable slots each, 50 entities per domain.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::SeedRng;
use crate::dialogue::ActionSpace;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotValues {
    pub slot: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainDef {
    pub name: String,
    pub informable: Vec<SlotValues>,
    pub requestable: Vec<String>,
    pub bookable: bool,
}

impl DomainDef {
    pub fn informable_slot(&self, slot: &str) -> Option<&SlotValues> {
        self.informable.iter().find(|s| s.slot == slot)
    }
}

/// One database row: a full valuation of the domain's slots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: usize,
    pub informable: BTreeMap<String, String>,
    pub requestable: BTreeMap<String, String>,
}

impl Entity {
    /// Does this entity satisfy every (slot, value) constraint?
    pub fn matches(&self, constraints: &BTreeMap<String, String>) -> bool {
        constraints
            .iter()
            .all(|(slot, value)| self.informable.get(slot) == Some(value))
    }
}

/// Schema plus entity tables; the content of the world JSON file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct World {
    pub domains: Vec<DomainDef>,
    /// domain name -> entities, ids dense from zero.
    pub entities: BTreeMap<String, Vec<Entity>>,
}

impl World {
    pub fn domain(&self, name: &str) -> Result<&DomainDef> {
        self.domains
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::Env(format!("unknown domain `{name}`")))
    }

    pub fn domain_names(&self) -> impl Iterator<Item = &str> {
        self.domains.iter().map(|d| d.name.as_str())
    }

    /// Entities of `domain` matching all constraints, in id order.
    pub fn filter(&self, domain: &str, constraints: &BTreeMap<String, String>) -> Vec<&Entity> {
        self.entities
            .get(domain)
            .map(|es| es.iter().filter(|e| e.matches(constraints)).collect())
            .unwrap_or_default()
    }

    /// Every entity must valuate all of its domain's slots, and ids must be
    /// dense in order.
    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(Error::Env("world has no domains".into()));
        }
        for d in &self.domains {
            let entities = self
                .entities
                .get(&d.name)
                .ok_or_else(|| Error::Env(format!("domain `{}` has no entities", d.name)))?;
            if entities.is_empty() {
                return Err(Error::Env(format!("domain `{}` has an empty table", d.name)));
            }
            for (i, e) in entities.iter().enumerate() {
                if e.id != i {
                    return Err(Error::Env(format!("domain `{}` ids are not dense", d.name)));
                }
                for s in &d.informable {
                    let v = e.informable.get(&s.slot).ok_or_else(|| {
                        Error::Env(format!("entity {}/{} misses slot `{}`", d.name, i, s.slot))
                    })?;
                    if !s.values.contains(v) {
                        return Err(Error::Env(format!(
                            "entity {}/{} has out-of-schema value `{v}` for `{}`",
                            d.name, i, s.slot
                        )));
                    }
                }
                for s in &d.requestable {
                    if !e.requestable.contains_key(s) {
                        return Err(Error::Env(format!(
                            "entity {}/{} misses requestable `{s}`",
                            d.name, i
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_file(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let world: World = serde_json::from_reader(r)?;
        world.validate()?;
        Ok(world)
    }

    /// The built-in synthetic world. Deterministic: entity tables come from a
    /// fixed internal seed, so every build sees the same world.
    pub fn default_synthetic() -> Self {
        let slots = |pairs: &[(&str, &[&str])]| -> Vec<SlotValues> {
            pairs
                .iter()
                .map(|(slot, values)| SlotValues {
                    slot: slot.to_string(),
                    values: values.iter().map(|v| v.to_string()).collect(),
                })
                .collect()
        };
        let areas: &[&str] = &["north", "south", "east", "west", "centre"];
        let prices: &[&str] = &["cheap", "moderate", "expensive"];
        let domains = vec![
            DomainDef {
                name: "restaurant".into(),
                informable: slots(&[
                    ("area", areas),
                    ("day", &["monday", "tuesday", "wednesday", "thursday", "friday"]),
                    ("food", &["thai", "italian", "chinese", "indian", "british"]),
                    ("pricerange", prices),
                ]),
                requestable: vec!["address".into(), "phone".into(), "postcode".into()],
                bookable: true,
            },
            DomainDef {
                name: "hotel".into(),
                informable: slots(&[
                    ("area", areas),
                    ("pricerange", prices),
                    ("stars", &["2", "3", "4", "5"]),
                    ("type", &["hotel", "guesthouse", "hostel"]),
                ]),
                requestable: vec!["address".into(), "phone".into(), "postcode".into()],
                bookable: true,
            },
            DomainDef {
                name: "attraction".into(),
                informable: slots(&[
                    ("area", areas),
                    ("duration", &["short", "medium", "long"]),
                    ("pricerange", prices),
                    ("type", &["museum", "park", "theatre", "college", "cinema"]),
                ]),
                requestable: vec!["address".into(), "phone".into(), "postcode".into()],
                bookable: false,
            },
        ];

        let mut entities = BTreeMap::new();
        for (di, d) in domains.iter().enumerate() {
            let mut rng = SeedRng::stream(0xD1A_70, di as u64);
            let rows = (0..50)
                .map(|id| {
                    let informable = d
                        .informable
                        .iter()
                        .map(|s| (s.slot.clone(), s.values[rng.index(s.values.len())].clone()))
                        .collect();
                    let requestable = d
                        .requestable
                        .iter()
                        .map(|s| (s.clone(), format!("{}-{s}-{id:03}", d.name)))
                        .collect();
                    Entity { id, informable, requestable }
                })
                .collect();
            entities.insert(d.name.clone(), rows);
        }
        let world = World { domains, entities };
        world.validate().expect("built-in world is valid");
        world
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActKind {
    Inform,
    Request,
    Book,
}

/// An atom name split back into its (domain, act type, slot) parts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedAtom {
    pub domain: String,
    pub kind: ActKind,
    pub slot: String,
}

/// Enumerate the system action space of a world: per domain, one inform atom
/// per requestable slot, one request atom per informable slot, and a book
/// atom for bookable domains.
pub fn derive_action_space(world: &World) -> (ActionSpace, Vec<ParsedAtom>) {
    let mut names = Vec::new();
    let mut parsed = Vec::new();
    for d in &world.domains {
        for s in &d.requestable {
            names.push(format!("{}-inform-{s}", d.name));
            parsed.push(ParsedAtom { domain: d.name.clone(), kind: ActKind::Inform, slot: s.clone() });
        }
        for s in &d.informable {
            names.push(format!("{}-request-{}", d.name, s.slot));
            parsed.push(ParsedAtom {
                domain: d.name.clone(),
                kind: ActKind::Request,
                slot: s.slot.clone(),
            });
        }
        if d.bookable {
            names.push(format!("{}-book-none", d.name));
            parsed.push(ParsedAtom { domain: d.name.clone(), kind: ActKind::Book, slot: "none".into() });
        }
    }
    let space = ActionSpace::new(names).expect("derived atom names are unique");
    (space, parsed)
}

/// Result-count bucket: 0 results (or no query yet), exactly 1, 2-4, 5+.
pub fn result_bucket(count: usize) -> usize {
    match count {
        0 => 0,
        1 => 1,
        2..=4 => 2,
        _ => 3,
    }
}

pub const RESULT_BUCKETS: usize = 4;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_world_is_stable_and_valid() {
        let a = World::default_synthetic();
        let b = World::default_synthetic();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.domains.len(), 3);
        assert_eq!(a.entities["restaurant"].len(), 50);
    }

    #[test]
    fn action_space_covers_every_domain() {
        let world = World::default_synthetic();
        let (space, parsed) = derive_action_space(&world);
        // 3 informs + 4 requests per domain, plus 2 book atoms
        assert_eq!(space.num_atoms(), 3 * 7 + 2);
        assert_eq!(parsed.len(), space.num_atoms());
        assert!(space.atom_names().contains(&"restaurant-inform-phone".to_string()));
        assert!(space.atom_names().contains(&"restaurant-book-none".to_string()));
        assert!(!space.atom_names().contains(&"attraction-book-none".to_string()));
    }

    #[test]
    fn filter_respects_constraints() {
        let world = World::default_synthetic();
        let all = world.filter("hotel", &BTreeMap::new());
        assert_eq!(all.len(), 50);
        let mut constraints = BTreeMap::new();
        constraints.insert("area".to_string(), "north".to_string());
        let north = world.filter("hotel", &constraints);
        assert!(!north.is_empty() && north.len() < 50);
        assert!(north.iter().all(|e| e.informable["area"] == "north"));
    }

    #[test]
    fn world_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("world.json");
        let world = World::default_synthetic();
        world.to_file(&path).unwrap();
        assert_eq!(World::from_file(&path).unwrap(), world);
    }

    #[test]
    fn buckets() {
        assert_eq!(result_bucket(0), 0);
        assert_eq!(result_bucket(1), 1);
        assert_eq!(result_bucket(3), 2);
        assert_eq!(result_bucket(5), 3);
        assert_eq!(result_bucket(50), 3);
    }
}
