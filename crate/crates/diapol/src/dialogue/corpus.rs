//! State-action corpora and their JSON Lines serialization.
//!
//! One object per line: `{"split": "train|val|test", "state": [0,1,...],
//! "actions": ["domain-acttype-slot", ...]}`. Generated corpora also carry an
//! optional `"dialogue"` id so dataset-fraction ablations can subsample whole
//! dialogues; the field is preserved on round-trips and absent for corpora
//! that never had it.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dialogue::action::{sort_actions_by_frequency, ActionSpace, AtomId};
use crate::dialogue::state::DialogueState;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// One state-action pair with its split tag and originating dialogue.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusEntry {
    pub split: Split,
    pub dialogue: Option<u64>,
    pub state: DialogueState,
    pub actions: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
}

#[derive(Serialize, Deserialize)]
struct CorpusLine {
    split: Split,
    #[serde(skip_serializing_if = "Option::is_none")]
    dialogue: Option<u64>,
    state: Vec<u8>,
    actions: Vec<String>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split_entries(split).count()
    }

    pub fn state_dim(&self) -> Option<usize> {
        self.entries.first().map(|e| e.state.dim())
    }

    /// Distinct dialogue ids in first-appearance order.
    pub fn dialogue_ids(&self) -> Vec<u64> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for e in &self.entries {
            if let Some(d) = e.dialogue {
                if seen.insert(d) {
                    out.push(d);
                }
            }
        }
        out
    }

    /// Entries whose dialogue id passes the filter, preserving order.
    pub fn filter_dialogues(&self, keep: &std::collections::BTreeSet<u64>) -> Corpus {
        Corpus {
            entries: self
                .entries
                .iter()
                .filter(|e| e.dialogue.map(|d| keep.contains(&d)).unwrap_or(false))
                .cloned()
                .collect(),
        }
    }

    /// Action counts over the train split, by rendered name.
    pub fn train_action_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for e in self.split_entries(Split::Train) {
            for a in &e.actions {
                *counts.entry(a.clone()).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Frequency order for `space` from this corpus's train split.
    /// Errors on an empty corpus.
    pub fn frequency_order(&self, space: &ActionSpace) -> Result<Vec<AtomId>> {
        if self.entries.is_empty() {
            return Err(Error::Corpus { line: 0, message: "empty corpus".into() });
        }
        Ok(sort_actions_by_frequency(&self.train_action_counts(), space))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for e in &self.entries {
            let line = CorpusLine {
                split: e.split,
                dialogue: e.dialogue,
                state: e.state.bits().to_vec(),
                actions: e.actions.clone(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut entries = Vec::new();
        let mut dim: Option<usize> = None;
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: CorpusLine = serde_json::from_str(&line).map_err(|e| Error::Corpus {
                line: lineno,
                message: e.to_string(),
            })?;
            let state = DialogueState::from_bits(parsed.state).map_err(|e| Error::Corpus {
                line: lineno,
                message: e.to_string(),
            })?;
            match dim {
                None => dim = Some(state.dim()),
                Some(d) if d != state.dim() => {
                    return Err(Error::Corpus {
                        line: lineno,
                        message: format!("state dim {} does not match {}", state.dim(), d),
                    })
                }
                _ => {}
            }
            entries.push(CorpusEntry {
                split: parsed.split,
                dialogue: parsed.dialogue,
                state,
                actions: parsed.actions,
            });
        }
        Ok(Corpus { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::SeedRng;

    fn random_corpus(n: usize, dim: usize, seed: u64) -> Corpus {
        let mut rng = SeedRng::from_seed(seed);
        let entries = (0..n)
            .map(|i| {
                let bits = (0..dim).map(|_| (rng.f64() < 0.3) as u8).collect();
                CorpusEntry {
                    split: match i % 10 {
                        0 => Split::Val,
                        1 => Split::Test,
                        _ => Split::Train,
                    },
                    dialogue: Some(i as u64 / 3),
                    state: DialogueState::from_bits(bits).unwrap(),
                    actions: vec![format!("dom-act-slot{}", i % 4)],
                }
            })
            .collect();
        Corpus { entries }
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let corpus = random_corpus(100, 24, 7);
        corpus.save(&path).unwrap();
        let back = Corpus::load(&path).unwrap();
        assert_eq!(corpus, back);
        assert_eq!(corpus.split_len(Split::Train), back.split_len(Split::Train));
    }

    #[test]
    fn empty_file_is_an_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        let corpus = Corpus::load(&path).unwrap();
        assert!(corpus.is_empty());
    }

    #[test]
    fn dim_mismatch_cites_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let mut lines = Vec::new();
        for i in 0..10 {
            let dim = if i == 6 { 3 } else { 4 }; // line 7 is short
            let bits = vec![0u8; dim];
            lines.push(
                serde_json::json!({"split": "train", "state": bits, "actions": []}).to_string(),
            );
        }
        std::fs::write(&path, lines.join("\n")).unwrap();
        let err = Corpus::load(&path).unwrap_err();
        assert!(err.to_string().contains("line 7"), "{err}");
    }

    #[test]
    fn frequency_order_matches_recount() {
        let corpus = random_corpus(2000, 8, 11);
        let space = ActionSpace::new(
            (0..4).map(|i| format!("dom-act-slot{i}")).collect(),
        )
        .unwrap();
        let order = corpus.frequency_order(&space).unwrap();

        // independent recount straight off the entries
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for e in &corpus.entries {
            if e.split == Split::Train {
                for a in &e.actions {
                    *counts.entry(a.as_str()).or_insert(0) += 1;
                }
            }
        }
        let mut expect: Vec<&str> = space.atom_names().iter().map(|s| s.as_str()).collect();
        expect.sort_by(|a, b| {
            counts
                .get(b)
                .copied()
                .unwrap_or(0)
                .cmp(&counts.get(a).copied().unwrap_or(0))
                .then(a.cmp(b))
        });
        let got: Vec<&str> = order.iter().map(|&id| space.name(id)).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn empty_corpus_has_no_frequency_order() {
        let space = ActionSpace::new(vec!["a".into()]).unwrap();
        assert!(Corpus::default().frequency_order(&space).is_err());
    }
}
