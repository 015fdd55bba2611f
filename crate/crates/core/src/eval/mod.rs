//! Filtered ranking and MRR / Hits@N over a split, pooled across both query directions.

mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{render_table, DirectionSplit, MetricsReport, SeedMetrics, TableRow};

use crate::data::{FilterIndex, Triple};
use crate::error::{KgcError, Result};
use crate::model::TailScorer;

/// Queries scored per `score_batch` call.
pub const EVAL_BATCH: usize = 128;

/// Rank of the ground truth for one query, as `(head, rel, tail)` with `rel` possibly inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankRecord {
    pub query: Triple,
    pub raw: f64,
    pub filtered: f64,
}

/// Raw and filtered rank of `gt` with the average-tie convention.
///
/// `filter` lists known-true tails; every member except `gt` is removed before ranking.
/// Duplicates and any order are accepted.
pub fn ranks(scores: &[f32], gt: usize, filter: &[usize]) -> Result<(f64, f64)> {
    let Some(&target) = scores.get(gt) else {
        return Err(KgcError::Contract(format!(
            "ground truth {gt} outside {} candidates",
            scores.len()
        )));
    };
    if target.is_nan() {
        return Err(KgcError::Contract(format!("ground truth {gt} has a NaN score")));
    }
    let tally = |s: f32, greater: &mut usize, equal: &mut usize| {
        if s > target {
            *greater += 1;
        } else if s == target {
            *equal += 1;
        }
    };
    let (mut greater, mut equal) = (0usize, 0usize);
    for (j, &s) in scores.iter().enumerate() {
        if j != gt {
            tally(s, &mut greater, &mut equal);
        }
    }
    let raw = 1.0 + greater as f64 + equal as f64 / 2.0;

    let mut removed: Vec<usize> = filter.iter().copied().filter(|&j| j != gt).collect();
    removed.sort_unstable();
    removed.dedup();
    let (mut fg, mut fe) = (0usize, 0usize);
    for &j in &removed {
        let s = *scores.get(j).ok_or_else(|| {
            KgcError::Contract(format!("filtered id {j} outside {} candidates", scores.len()))
        })?;
        tally(s, &mut fg, &mut fe);
    }
    let filtered = 1.0 + (greater - fg) as f64 + (equal - fe) as f64 / 2.0;
    Ok((raw, filtered))
}

/// Filtered rank only.
pub fn rank_of(scores: &[f32], gt: usize, filter: &[usize]) -> Result<f64> {
    ranks(scores, gt, filter).map(|(_, f)| f)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

impl Metrics {
    /// Means over filtered ranks; all zeros for an empty list.
    pub fn from_ranks(ranks: &[f64]) -> Self {
        if ranks.is_empty() {
            return Metrics::default();
        }
        let n = ranks.len() as f64;
        let hits = |k: f64| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        Metrics {
            mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
            hits1: hits(1.0),
            hits3: hits(3.0),
            hits10: hits(10.0),
        }
    }

    pub fn values(&self) -> [f64; 4] {
        [self.mrr, self.hits1, self.hits3, self.hits10]
    }

    pub fn from_values(v: [f64; 4]) -> Self {
        Metrics {
            mrr: v[0],
            hits1: v[1],
            hits3: v[2],
            hits10: v[3],
        }
    }
}

/// Every query's ranks plus pooled and per-direction metrics.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Tail queries in split order, then head queries in split order.
    pub records: Vec<RankRecord>,
    pub pooled: Metrics,
    pub split: DirectionSplit,
}

/// The `2 |split|` queries: `(h, r, t)` then `(t, r + R, h)` for each triple.
pub fn queries(triples: &[Triple], num_relations: usize) -> Vec<Triple> {
    let mut out: Vec<Triple> = triples.to_vec();
    out.extend(
        triples
            .iter()
            .map(|t| Triple::new(t.tail, t.rel + num_relations, t.head)),
    );
    out
}

pub fn evaluate(
    scorer: &dyn TailScorer,
    triples: &[Triple],
    filter: &FilterIndex,
    num_relations: usize,
) -> Result<Evaluation> {
    let qs = queries(triples, num_relations);
    let chunks: Vec<Result<Vec<RankRecord>>> = qs
        .par_chunks(EVAL_BATCH)
        .map(|chunk| {
            let pairs: Vec<(usize, usize)> = chunk.iter().map(|q| (q.head, q.rel)).collect();
            let rows = scorer.rank_scores(&pairs)?;
            let n = scorer.num_entities();
            chunk
                .iter()
                .enumerate()
                .map(|(i, q)| {
                    let row = &rows.data()[i * n..(i + 1) * n];
                    let (raw, filtered) = ranks(row, q.tail, filter.tails(q.head, q.rel))?;
                    Ok(RankRecord {
                        query: *q,
                        raw,
                        filtered,
                    })
                })
                .collect()
        })
        .collect();
    let mut records = Vec::with_capacity(qs.len());
    for chunk in chunks {
        records.extend(chunk?);
    }
    let filtered: Vec<f64> = records.iter().map(|r| r.filtered).collect();
    let half = triples.len();
    Ok(Evaluation {
        pooled: Metrics::from_ranks(&filtered),
        split: DirectionSplit {
            tail: Metrics::from_ranks(&filtered[..half]),
            head: Metrics::from_ranks(&filtered[half..]),
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unique_maximum_ranks_first() {
        assert_eq!(rank_of(&[0.1, 3.0, 0.2], 1, &[]).unwrap(), 1.0);
    }

    #[test]
    fn all_ties_give_the_middle_rank() {
        assert_eq!(rank_of(&[1.0; 5], 2, &[]).unwrap(), 3.0);
    }

    #[test]
    fn filtering_removes_competitors_but_never_the_truth() {
        assert_eq!(ranks(&[9.0, 7.0, 7.0, 5.0], 3, &[0]).unwrap(), (4.0, 3.0));
        assert_eq!(rank_of(&[9.0, 7.0, 7.0, 5.0], 3, &[0, 3, 0]).unwrap(), 3.0);
        assert_eq!(rank_of(&[9.0, 7.0, 7.0, 5.0], 1, &[]).unwrap(), 2.5);
    }

    #[test]
    fn out_of_range_truth_is_a_contract_error() {
        assert!(matches!(rank_of(&[1.0, 2.0], 2, &[]), Err(KgcError::Contract(_))));
        assert!(matches!(rank_of(&[1.0, 2.0], 0, &[5]), Err(KgcError::Contract(_))));
    }

    #[test]
    fn metrics_from_ranks_one_two_four() {
        let m = Metrics::from_ranks(&[1.0, 2.0, 4.0]);
        assert!((m.mrr - 1.75 / 3.0).abs() < 1e-15);
        assert_eq!((m.hits1, m.hits3, m.hits10), (1.0 / 3.0, 2.0 / 3.0, 1.0));
    }

    #[test]
    fn queries_cover_both_directions() {
        let q = queries(&[Triple::new(0, 1, 2)], 3);
        assert_eq!(q, vec![Triple::new(0, 1, 2), Triple::new(2, 4, 0)]);
    }
}
