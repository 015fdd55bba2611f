use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::data::{self_loop_relation, Adjacency};
use crate::error::{KgcError, Result};

/// Edges of one relation, for RGCN's per-relation transforms.
#[derive(Debug, Clone)]
pub(crate) struct RelationGroup {
    pub rel: usize,
    pub neighbors: Arc<[usize]>,
}

/// Edges of one CompGCN direction (original, inverse, self-loop).
#[derive(Debug, Clone, Default)]
pub(crate) struct DirectionGroup {
    pub neighbors: Arc<[usize]>,
    pub relations: Arc<[usize]>,
    pub targets: Vec<usize>,
}

/// Index arrays derived once from an adjacency and reused by every forward pass.
#[derive(Debug, Clone)]
pub struct EncoderGraph {
    pub(crate) num_entities: usize,
    pub(crate) num_relations: usize,
    /// RGCN: groups in relation order, their concatenated targets and `1/c_{h,r}` weights.
    pub(crate) rgcn_groups: Vec<RelationGroup>,
    pub(crate) rgcn_targets: Arc<[usize]>,
    pub(crate) rgcn_weights: Arc<[f64]>,
    /// CompGCN: original, inverse and self-loop directions.
    pub(crate) compgcn: [DirectionGroup; 3],
    /// KBGAT: edges ordered by center entity with segment offsets.
    pub(crate) kbgat_centers: Arc<[usize]>,
    pub(crate) kbgat_neighbors: Arc<[usize]>,
    pub(crate) kbgat_relations: Arc<[usize]>,
    pub(crate) kbgat_offsets: Arc<[usize]>,
}

impl EncoderGraph {
    pub fn new(adjacency: &Adjacency, num_relations: usize) -> Result<Self> {
        let n = adjacency.num_entities();
        let slots = 2 * num_relations + 1;
        let self_rel = self_loop_relation(num_relations);
        for (target, rel, nbr) in adjacency.edges() {
            if rel >= slots {
                return Err(KgcError::config(format!(
                    "graph: entity {target} has an edge with unknown relation {rel} (slots {slots})"
                )));
            }
            if nbr >= n {
                return Err(KgcError::config(format!(
                    "graph: entity {target} has an edge to unknown entity {nbr}"
                )));
            }
        }

        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for (target, rel, _) in adjacency.edges() {
            *counts.entry((target, rel)).or_default() += 1;
        }
        let mut by_rel: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        for (target, rel, nbr) in adjacency.edges() {
            let e = by_rel.entry(rel).or_default();
            e.0.push(nbr);
            e.1.push(target);
        }
        let mut rgcn_groups = Vec::new();
        let mut rgcn_targets = Vec::new();
        let mut rgcn_weights = Vec::new();
        for (rel, (nbrs, targets)) in by_rel {
            for &t in &targets {
                rgcn_weights.push(1.0 / counts[&(t, rel)] as f64);
            }
            rgcn_targets.extend_from_slice(&targets);
            rgcn_groups.push(RelationGroup {
                rel,
                neighbors: nbrs.into(),
            });
        }

        let mut dirs: [(Vec<usize>, Vec<usize>, Vec<usize>); 3] = Default::default();
        for (target, list) in adjacency.lists().iter().enumerate() {
            let mut has_self = false;
            for &(rel, nbr) in list {
                let d = if rel < num_relations {
                    0
                } else if rel < 2 * num_relations {
                    1
                } else {
                    has_self |= nbr == target;
                    2
                };
                dirs[d].0.push(nbr);
                dirs[d].1.push(rel);
                dirs[d].2.push(target);
            }
            if !has_self {
                dirs[2].0.push(target);
                dirs[2].1.push(self_rel);
                dirs[2].2.push(target);
            }
        }
        let compgcn = dirs.map(|(nbrs, rels, targets)| DirectionGroup {
            neighbors: nbrs.into(),
            relations: rels.into(),
            targets,
        });

        let mut centers = Vec::new();
        let mut neighbors = Vec::new();
        let mut relations = Vec::new();
        let mut offsets = vec![0];
        for (center, list) in adjacency.lists().iter().enumerate() {
            if list.is_empty() {
                centers.push(center);
                neighbors.push(center);
                relations.push(self_rel);
            }
            for &(rel, nbr) in list {
                centers.push(center);
                neighbors.push(nbr);
                relations.push(rel);
            }
            offsets.push(centers.len());
        }

        Ok(EncoderGraph {
            num_entities: n,
            num_relations,
            rgcn_groups,
            rgcn_targets: rgcn_targets.into(),
            rgcn_weights: rgcn_weights.into(),
            compgcn,
            kbgat_centers: centers.into(),
            kbgat_neighbors: neighbors.into(),
            kbgat_relations: relations.into(),
            kbgat_offsets: offsets.into(),
        })
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    /// Relation slots: base, inverse and the self-loop relation.
    pub fn relation_slots(&self) -> usize {
        2 * self.num_relations + 1
    }
}
