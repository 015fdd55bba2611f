use std::collections::HashMap;

use super::triples::Triple;

/// Known-true tails per `(head, relation)` over every split, both directions.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    map: HashMap<(usize, usize), Vec<usize>>,
}

impl FilterIndex {
    pub fn build(splits: &[&[Triple]], num_relations: usize) -> Self {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for t in splits.iter().flat_map(|s| s.iter()) {
            map.entry((t.head, t.rel)).or_default().push(t.tail);
            map.entry((t.tail, t.rel + num_relations))
                .or_default()
                .push(t.head);
        }
        for tails in map.values_mut() {
            tails.sort_unstable();
            tails.dedup();
        }
        FilterIndex { map }
    }

    /// Sorted, de-duplicated tails; empty when the query was never seen.
    pub fn tails(&self, head: usize, rel: usize) -> &[usize] {
        self.map.get(&(head, rel)).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, head: usize, rel: usize, tail: usize) -> bool {
        self.tails(head, rel).binary_search(&tail).is_ok()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collects_tails_and_inverse_entries() {
        let split = [Triple::new(0, 0, 1), Triple::new(0, 0, 2)];
        let idx = FilterIndex::build(&[&split], 1);
        assert_eq!(idx.tails(0, 0), &[1, 2]);
        assert_eq!(idx.tails(1, 1), &[0]);
        assert_eq!(idx.tails(2, 1), &[0]);
    }

    #[test]
    fn absent_query_is_empty() {
        let idx = FilterIndex::build(&[&[Triple::new(0, 0, 1)]], 1);
        assert!(idx.tails(1, 0).is_empty());
    }
}
