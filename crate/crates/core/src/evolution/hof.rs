use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::agents::{Dyad, GenomeKey};
use crate::evolution::nsga::dominates;
use crate::objectives::ObjectiveVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchivedDyad {
    pub dyad: Dyad,
    pub objectives: ObjectiveVector,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HofDelta {
    pub added: usize,
    pub evicted: usize,
}

/// Run-spanning archive of mutually non-dominated, genome-distinct dyads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "HofFile", into = "HofFile")]
pub struct HallOfFame {
    pub seed: u64,
    /// Last generation merged in.
    pub generation: u32,
    members: Vec<ArchivedDyad>,
    keys: HashSet<GenomeKey>,
}

#[derive(Serialize, Deserialize)]
struct HofFile {
    seed: u64,
    generation: u32,
    members: Vec<ArchivedDyad>,
}

impl From<HofFile> for HallOfFame {
    fn from(f: HofFile) -> Self {
        let keys = f.members.iter().map(|m| m.dyad.genome_key()).collect();
        Self {
            seed: f.seed,
            generation: f.generation,
            members: f.members,
            keys,
        }
    }
}

impl From<HallOfFame> for HofFile {
    fn from(h: HallOfFame) -> Self {
        Self {
            seed: h.seed,
            generation: h.generation,
            members: h.members,
        }
    }
}

impl HallOfFame {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            generation: 0,
            members: Vec::new(),
            keys: HashSet::new(),
        }
    }

    pub fn members(&self) -> &[ArchivedDyad] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains_genome(&self, dyad: &Dyad) -> bool {
        self.keys.contains(&dyad.genome_key())
    }

    /// Inserts each candidate unless its genome is already archived or an
    /// archived member dominates it; members the candidate dominates are
    /// evicted. Invalid trials are never archived. Merging the same batch
    /// twice is a no-op the second time.
    pub fn merge<I: IntoIterator<Item = ArchivedDyad>>(&mut self, candidates: I) -> HofDelta {
        let mut delta = HofDelta::default();
        for cand in candidates {
            if cand.objectives.is_invalid() {
                continue;
            }
            let key = cand.dyad.genome_key();
            if self.keys.contains(&key) {
                continue;
            }
            let c = cand.objectives.to_array();
            if self
                .members
                .iter()
                .any(|m| dominates(&m.objectives.to_array(), &c))
            {
                continue;
            }
            let before = self.members.len();
            let keys = &mut self.keys;
            self.members.retain(|m| {
                let keep = !dominates(&c, &m.objectives.to_array());
                if !keep {
                    keys.remove(&m.dyad.genome_key());
                }
                keep
            });
            delta.evicted += before - self.members.len();
            self.keys.insert(key);
            self.members.push(cand);
            delta.added += 1;
        }
        delta
    }

    pub fn is_mutually_non_dominated(&self) -> bool {
        self.members.iter().all(|a| {
            self.members
                .iter()
                .all(|b| !dominates(&a.objectives.to_array(), &b.objectives.to_array()))
        })
    }
}
