//! DistMult and ConvE, both expressed as a query vector per `(h, r)` dotted with tail rows.

use rand::{Rng, RngCore};

use super::config::{DiagonalSource, ScorerConfig, ScorerKind};
use super::encoders::Encoded;
use super::graph::EncoderGraph;
use crate::autodiff::{NodeId, ParameterStore, Real, Tape, Tensor};
use crate::error::{KgcError, Result};

pub const DIAGONAL: &str = "distmult.diag";
pub const FILTERS: &str = "conve.filters";
pub const PROJECTION: &str = "conve.proj";
pub const TAIL_BIAS: &str = "conve.bias";

pub(crate) fn init_scorer<T: Real>(
    cfg: &ScorerConfig,
    diagonal: DiagonalSource,
    dim: usize,
    graph: &EncoderGraph,
    store: &mut ParameterStore<T>,
    rng: &mut impl Rng,
) -> Result<()> {
    match cfg.kind {
        ScorerKind::Distmult => {
            if diagonal == DiagonalSource::IndependentTable {
                let bound = 1.0 / (dim as f64).sqrt();
                store.insert_uniform(DIAGONAL, &[graph.num_relations(), dim], bound, rng)?;
            }
        }
        ScorerKind::Conve => {
            let k = cfg.kernel;
            store.insert_uniform(FILTERS, &[cfg.filters, k, k], 1.0 / k as f64, rng)?;
            let (oh, ow) = cfg.conv_output();
            let flat = cfg.filters * oh * ow;
            store.insert_uniform(PROJECTION, &[flat, dim], 1.0 / (flat as f64).sqrt(), rng)?;
            if cfg.tail_bias {
                store.insert(TAIL_BIAS, Tensor::zeros(&[graph.num_entities(), 1]))?;
            }
        }
    }
    Ok(())
}

fn check_ids(kind: &'static str, ids: &[usize], limit: usize) -> Result<()> {
    match ids.iter().find(|&&i| i >= limit) {
        Some(i) => Err(KgcError::Contract(format!("{kind} id {i} out of range {limit}"))),
        None => Ok(()),
    }
}

/// Inverted dropout as a constant mask; identity when `p == 0` or no rng is given.
fn dropout<T: Real>(
    tape: &mut Tape<T>,
    x: NodeId,
    p: f64,
    rng: &mut Option<&mut dyn RngCore>,
) -> Result<NodeId> {
    let Some(rng) = rng.as_mut() else {
        return Ok(x);
    };
    if p <= 0.0 {
        return Ok(x);
    }
    let keep = T::lit(1.0 / (1.0 - p));
    let shape = tape.shape(x).to_vec();
    let mask = Tensor::from_fn(&shape, |_| if rng.gen::<f64>() < p { T::zero() } else { keep });
    let m = tape.constant(mask)?;
    tape.mul(x, m)
}

/// Query vectors `B x d`; a tail's score is the dot product with its entity row (plus bias).
#[allow(clippy::too_many_arguments)]
pub(crate) fn query<T: Real>(
    cfg: &ScorerConfig,
    diagonal: DiagonalSource,
    graph: &EncoderGraph,
    tape: &mut Tape<T>,
    store: &ParameterStore<T>,
    enc: Encoded,
    heads: &[usize],
    rels: &[usize],
    mut rng: Option<&mut dyn RngCore>,
) -> Result<NodeId> {
    if heads.len() != rels.len() {
        return Err(KgcError::shape("query", format!("{} heads, {} relations", heads.len(), rels.len())));
    }
    check_ids("entity", heads, graph.num_entities())?;
    check_ids("relation", rels, 2 * graph.num_relations())?;
    let xh = tape.gather(enc.entities, heads.to_vec())?;
    match cfg.kind {
        ScorerKind::Distmult => {
            let diag = match diagonal {
                DiagonalSource::RelationEmbedding => tape.gather(enc.relations, rels.to_vec())?,
                DiagonalSource::IndependentTable => {
                    let table = tape.param(store, DIAGONAL)?;
                    let base: Vec<usize> = rels.iter().map(|r| r % graph.num_relations()).collect();
                    tape.gather(table, base)?
                }
            };
            tape.mul(xh, diag)
        }
        ScorerKind::Conve => {
            let b = heads.len();
            let (rows, cols) = (cfg.reshape_rows, cfg.reshape_cols);
            let xr = tape.gather(enc.relations, rels.to_vec())?;
            let h2 = tape.reshape(xh, &[b, rows, cols])?;
            let r2 = tape.reshape(xr, &[b, rows, cols])?;
            let stacked = tape.concat(&[h2, r2], 1)?;
            let stacked = dropout(tape, stacked, cfg.input_dropout, &mut rng)?;
            let filters = tape.param(store, FILTERS)?;
            let conv = tape.conv2d(stacked, filters)?;
            let conv = tape.relu(conv)?;
            let conv = dropout(tape, conv, cfg.feature_dropout, &mut rng)?;
            let flat_width: usize = tape.shape(conv)[1..].iter().product();
            let flat = tape.reshape(conv, &[b, flat_width])?;
            let proj = tape.param(store, PROJECTION)?;
            let hidden = tape.matmul(flat, proj)?;
            let hidden = dropout(tape, hidden, cfg.hidden_dropout, &mut rng)?;
            tape.relu(hidden)
        }
    }
}

fn has_bias(cfg: &ScorerConfig) -> bool {
    cfg.kind == ScorerKind::Conve && cfg.tail_bias
}

/// Scores against every entity: `B x N`.
pub(crate) fn score_all<T: Real>(
    cfg: &ScorerConfig,
    tape: &mut Tape<T>,
    store: &ParameterStore<T>,
    enc: Encoded,
    q: NodeId,
) -> Result<NodeId> {
    let scores = tape.matmul_nt(q, enc.entities)?;
    if !has_bias(cfg) {
        return Ok(scores);
    }
    let b = tape.shape(q)[0];
    let bias = tape.param(store, TAIL_BIAS)?;
    let n = tape.shape(bias)[0];
    let row = tape.reshape(bias, &[1, n])?;
    let ones = tape.constant(Tensor::full(&[b, 1], T::one()))?;
    let tiled = tape.matmul(ones, row)?;
    tape.add(scores, tiled)
}

/// Scores of selected `(query row, candidate)` pairs: `M x 1`.
pub(crate) fn score_pairs<T: Real>(
    cfg: &ScorerConfig,
    tape: &mut Tape<T>,
    store: &ParameterStore<T>,
    enc: Encoded,
    q: NodeId,
    query_rows: &[usize],
    candidates: &[usize],
) -> Result<NodeId> {
    if query_rows.len() != candidates.len() {
        return Err(KgcError::shape(
            "score_pairs",
            format!("{} query rows, {} candidates", query_rows.len(), candidates.len()),
        ));
    }
    let qs = tape.gather(q, query_rows.to_vec())?;
    let xt = tape.gather(enc.entities, candidates.to_vec())?;
    let prod = tape.mul(qs, xt)?;
    let d = tape.shape(prod)[1];
    let ones = tape.constant(Tensor::full(&[d, 1], T::one()))?;
    let scores = tape.matmul(prod, ones)?;
    if !has_bias(cfg) {
        return Ok(scores);
    }
    let bias = tape.param(store, TAIL_BIAS)?;
    let b = tape.gather(bias, candidates.to_vec())?;
    tape.add(scores, b)
}
