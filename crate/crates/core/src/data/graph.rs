//! Message-passing graph construction and its ablation variants.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::triples::Triple;
use crate::error::{KgcError, Result};

/// Which edges the encoder aggregates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GraphMode {
    #[default]
    Original,
    /// Identity adjacency: every entity only sees itself through the self-loop relation.
    SelfLoopsOnly,
    /// Same edge count and relation labels as the original graph, endpoints resampled.
    Random { seed: u64 },
}

impl fmt::Display for GraphMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphMode::Original => f.write_str("original"),
            GraphMode::SelfLoopsOnly => f.write_str("self_loops_only"),
            GraphMode::Random { seed } => write!(f, "random:{seed}"),
        }
    }
}

impl FromStr for GraphMode {
    type Err = KgcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(GraphMode::Original),
            "self_loops_only" => Ok(GraphMode::SelfLoopsOnly),
            "random" => Ok(GraphMode::Random { seed: 0 }),
            other => match other.strip_prefix("random:") {
                Some(seed) => seed
                    .parse()
                    .map(|seed| GraphMode::Random { seed })
                    .map_err(|_| KgcError::config(format!("graph_mode: bad random seed {seed:?}"))),
                None => Err(KgcError::config(format!(
                    "graph_mode: unknown mode {other:?} (expected original, self_loops_only, random[:seed])"
                ))),
            },
        }
    }
}

impl Serialize for GraphMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GraphMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-entity incoming `(relation, neighbor)` tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    lists: Vec<Vec<(usize, usize)>>,
}

impl Adjacency {
    pub fn from_lists(lists: Vec<Vec<(usize, usize)>>) -> Self {
        Adjacency { lists }
    }

    pub fn num_entities(&self) -> usize {
        self.lists.len()
    }

    pub fn neighbors(&self, entity: usize) -> &[(usize, usize)] {
        &self.lists[entity]
    }

    pub fn lists(&self) -> &[Vec<(usize, usize)>] {
        &self.lists
    }

    pub fn edge_count(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    /// Iterates `(target, relation, neighbor)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.lists
            .iter()
            .enumerate()
            .flat_map(|(t, l)| l.iter().map(move |&(r, n)| (t, r, n)))
    }
}

/// Id of the dedicated self-loop relation, `2R`.
pub const fn self_loop_relation(num_relations: usize) -> usize {
    2 * num_relations
}

pub fn build_adjacency(
    train_aug: &[Triple],
    num_entities: usize,
    num_relations: usize,
    mode: GraphMode,
) -> Result<Adjacency> {
    let check = |t: &Triple| -> Result<()> {
        if t.head >= num_entities || t.tail >= num_entities || t.rel >= 2 * num_relations {
            return Err(KgcError::Contract(format!(
                "triple {t:?} outside N={num_entities}, 2R={}",
                2 * num_relations
            )));
        }
        Ok(())
    };
    let mut lists = vec![Vec::new(); num_entities];
    match mode {
        GraphMode::Original => {
            for t in train_aug {
                check(t)?;
                lists[t.tail].push((t.rel, t.head));
            }
        }
        GraphMode::SelfLoopsOnly => {
            let self_rel = self_loop_relation(num_relations);
            for (e, list) in lists.iter_mut().enumerate() {
                list.push((self_rel, e));
            }
        }
        GraphMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for t in train_aug {
                check(t)?;
                let head = rng.gen_range(0..num_entities);
                let tail = rng.gen_range(0..num_entities);
                lists[tail].push((t.rel, head));
            }
        }
    }
    Ok(Adjacency { lists })
}
