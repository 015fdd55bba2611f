//! Summed BCE over a batch of augmented triples in either loss regime.

use rand::RngCore;

use super::negatives::{sample_negatives, LossConfig};
use crate::autodiff::{NodeId, ParameterStore, Real, Tape};
use crate::data::Triple;
use crate::error::{KgcError, Result};
use crate::model::{Encoded, Model};

/// Builds the batch loss on `tape` from an existing encoding.
///
/// Without sampling every entity is scored and only the true tail is a positive. With
/// sampling each positive is paired with `k` distinct corrupted tails. `rng` drives both
/// negative draws and dropout; pass `None` for a deterministic, dropout-free loss (which
/// then requires the without-sampling regime or explicit negatives via [`pairs_loss`]).
pub fn batch_loss<T: Real>(
    model: &Model,
    tape: &mut Tape<T>,
    store: &ParameterStore<T>,
    enc: Encoded,
    batch: &[Triple],
    loss: &LossConfig,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<NodeId> {
    let n = model.num_entities();
    match loss {
        LossConfig::WithoutSampling => {
            let heads: Vec<usize> = batch.iter().map(|t| t.head).collect();
            let rels: Vec<usize> = batch.iter().map(|t| t.rel).collect();
            let q = model.query(tape, store, enc, &heads, &rels, rng)?;
            let scores = model.score_all(tape, store, enc, q)?;
            let mut targets = vec![T::zero(); batch.len() * n];
            for (i, t) in batch.iter().enumerate() {
                targets[i * n + t.tail] = T::one();
            }
            tape.bce(scores, targets)
        }
        LossConfig::WithSampling { k } => {
            let k = k.resolve(n)?;
            let Some(r) = rng.as_deref_mut() else {
                return Err(KgcError::Contract("sampled loss needs an rng".into()));
            };
            let mut negatives = Vec::with_capacity(batch.len());
            for t in batch {
                negatives.push(sample_negatives(t.tail, k, n, &mut RngRef(r))?);
            }
            pairs_loss(model, tape, store, enc, batch, &negatives, rng)
        }
    }
}

/// Loss with explicit negatives: `negatives[i]` are the corrupted tails of `batch[i]`.
pub fn pairs_loss<T: Real>(
    model: &Model,
    tape: &mut Tape<T>,
    store: &ParameterStore<T>,
    enc: Encoded,
    batch: &[Triple],
    negatives: &[Vec<usize>],
    rng: Option<&mut dyn RngCore>,
) -> Result<NodeId> {
    if negatives.len() != batch.len() {
        return Err(KgcError::shape(
            "pairs_loss",
            format!("{} triples, {} negative lists", batch.len(), negatives.len()),
        ));
    }
    let heads: Vec<usize> = batch.iter().map(|t| t.head).collect();
    let rels: Vec<usize> = batch.iter().map(|t| t.rel).collect();
    let q = model.query(tape, store, enc, &heads, &rels, rng)?;
    let mut rows = Vec::new();
    let mut candidates = Vec::new();
    let mut targets = Vec::new();
    for (i, (t, negs)) in batch.iter().zip(negatives).enumerate() {
        rows.push(i);
        candidates.push(t.tail);
        targets.push(T::one());
        for &c in negs {
            rows.push(i);
            candidates.push(c);
            targets.push(T::zero());
        }
    }
    let scores = model.score_pairs(tape, store, enc, q, &rows, &candidates)?;
    tape.bce(scores, targets)
}

/// Lets a `&mut dyn RngCore` stand in where `impl Rng` is expected.
struct RngRef<'a>(&'a mut dyn RngCore);

impl RngCore for RngRef<'_> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}
