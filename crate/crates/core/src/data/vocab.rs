use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::triples::{RawTriple, Triple};
use crate::error::{KgcError, Result};

/// Dense entity and relation ids, assigned in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    entity_to_id: HashMap<String, usize>,
    relation_to_id: HashMap<String, usize>,
    entities: Vec<String>,
    relations: Vec<String>,
}

impl Vocab {
    /// Ids follow first appearance over train, then valid, then test.
    pub fn build(train: &[RawTriple], valid: &[RawTriple], test: &[RawTriple]) -> Result<Self> {
        if train.is_empty() || valid.is_empty() || test.is_empty() {
            return Err(KgcError::Contract(
                "vocabulary needs non-empty train, valid and test splits".into(),
            ));
        }
        let mut vocab = Vocab::default();
        for t in train.iter().chain(valid).chain(test) {
            vocab.intern_entity(&t.head);
            vocab.intern_relation(&t.relation);
            vocab.intern_entity(&t.tail);
        }
        Ok(vocab)
    }

    fn intern_entity(&mut self, name: &str) -> usize {
        if let Some(&id) = self.entity_to_id.get(name) {
            return id;
        }
        let id = self.entities.len();
        self.entities.push(name.to_owned());
        self.entity_to_id.insert(name.to_owned(), id);
        id
    }

    fn intern_relation(&mut self, name: &str) -> usize {
        if let Some(&id) = self.relation_to_id.get(name) {
            return id;
        }
        let id = self.relations.len();
        self.relations.push(name.to_owned());
        self.relation_to_id.insert(name.to_owned(), id);
        id
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    /// Base relation count R, before inverses.
    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entity_to_id.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relation_to_id.get(name).copied()
    }

    pub fn entity_name(&self, id: usize) -> Option<&str> {
        self.entities.get(id).map(String::as_str)
    }

    pub fn relation_name(&self, id: usize) -> Option<&str> {
        self.relations.get(id).map(String::as_str)
    }

    pub fn encode(&self, raw: &[RawTriple]) -> Result<Vec<Triple>> {
        raw.iter()
            .map(|t| {
                let lookup = |opt: Option<usize>, name: &str| {
                    opt.ok_or_else(|| KgcError::Contract(format!("name {name:?} not in vocabulary")))
                };
                Ok(Triple::new(
                    lookup(self.entity_id(&t.head), &t.head)?,
                    lookup(self.relation_id(&t.relation), &t.relation)?,
                    lookup(self.entity_id(&t.tail), &t.tail)?,
                ))
            })
            .collect()
    }

    /// Maps base-relation triples back to names. Inverse ids are rejected.
    pub fn decode(&self, triples: &[Triple]) -> Result<Vec<RawTriple>> {
        triples
            .iter()
            .map(|t| {
                let name = |n: Option<&str>, what: &str, id: usize| {
                    n.map(str::to_owned)
                        .ok_or_else(|| KgcError::Contract(format!("{what} id {id} out of range")))
                };
                Ok(RawTriple {
                    head: name(self.entity_name(t.head), "entity", t.head)?,
                    relation: name(self.relation_name(t.rel), "relation", t.rel)?,
                    tail: name(self.entity_name(t.tail), "entity", t.tail)?,
                })
            })
            .collect()
    }

    /// SHA-256 over entity then relation names in id order.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"entities\n");
        for e in &self.entities {
            hasher.update(e.as_bytes());
            hasher.update(b"\n");
        }
        hasher.update(b"relations\n");
        for r in &self.relations {
            hasher.update(r.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(t: &[(&str, &str, &str)]) -> Vec<RawTriple> {
        t.iter().map(|(h, r, t)| RawTriple::new(h, r, t)).collect()
    }

    #[test]
    fn single_triple_counts() {
        let s = raw(&[("a", "r", "b")]);
        let v = Vocab::build(&s, &s, &s).unwrap();
        assert_eq!(v.num_entities(), 2);
        assert_eq!(v.num_relations(), 1);
    }

    #[test]
    fn first_seen_order_across_splits() {
        let v = Vocab::build(
            &raw(&[("x", "p", "y")]),
            &raw(&[("z", "q", "x")]),
            &raw(&[("w", "p", "y")]),
        )
        .unwrap();
        assert_eq!(v.entity_id("x"), Some(0));
        assert_eq!(v.entity_id("y"), Some(1));
        assert_eq!(v.entity_id("z"), Some(2));
        assert_eq!(v.entity_id("w"), Some(3));
        assert_eq!(v.relation_id("q"), Some(1));
    }

    #[test]
    fn round_trip_names() {
        let s = raw(&[("a", "r", "b"), ("b", "s", "c"), ("a", "r", "b")]);
        let v = Vocab::build(&s, &s, &s).unwrap();
        assert_eq!(v.decode(&v.encode(&s).unwrap()).unwrap(), s);
    }

    #[test]
    fn hash_depends_on_order() {
        let a = raw(&[("a", "r", "b")]);
        let b = raw(&[("b", "r", "a")]);
        let va = Vocab::build(&a, &a, &a).unwrap();
        let vb = Vocab::build(&b, &b, &b).unwrap();
        assert_ne!(va.hash(), vb.hash());
        assert_eq!(va.hash(), Vocab::build(&a, &a, &a).unwrap().hash());
    }
}
