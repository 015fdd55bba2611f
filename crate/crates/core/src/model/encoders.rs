//! MLP, RGCN, CompGCN and KBGAT layers on the tape.
//!
//! Embeddings are row-major: a layer maps `X (N x d_k)` to `X (N x d_{k+1})` via `X W`
//! with `W` of shape `d_k x d_{k+1}`.

use std::sync::Arc;

use rand::Rng;

use super::config::{Activation, EncoderConfig, EncoderKind};
use super::graph::EncoderGraph;
use crate::autodiff::{NodeId, ParameterStore, Real, Tape, Tensor};
use crate::error::Result;

pub const ENTITY: &str = "entity";
pub const RELATION: &str = "relation";

/// Final entity and relation embeddings of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub entities: NodeId,
    pub relations: NodeId,
}

pub(crate) fn init_encoder<T: Real>(
    cfg: &EncoderConfig,
    graph: &EncoderGraph,
    store: &mut ParameterStore<T>,
    rng: &mut impl Rng,
) -> Result<()> {
    let w = cfg.widths();
    let (n, slots) = (graph.num_entities(), graph.relation_slots());
    let bound = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
    store.insert_uniform(ENTITY, &[n, w[0]], bound(w[0]), rng)?;
    // RGCN never updates relations; its table only feeds the scorer at the output width.
    let rel_width = if cfg.kind == EncoderKind::Rgcn { cfg.output_dim() } else { w[0] };
    store.insert_uniform(RELATION, &[slots, rel_width], bound(rel_width), rng)?;
    for k in 0..cfg.layers {
        let (din, dout) = (w[k], w[k + 1]);
        match cfg.kind {
            EncoderKind::Mlp => {
                store.insert_uniform(format!("mlp.{k}.ent"), &[din, dout], bound(din), rng)?;
                store.insert_uniform(format!("mlp.{k}.rel"), &[din, dout], bound(din), rng)?;
            }
            EncoderKind::Rgcn => {
                for r in 0..slots {
                    store.insert_uniform(format!("rgcn.{k}.w{r}"), &[din, dout], bound(din), rng)?;
                }
                store.insert_uniform(format!("rgcn.{k}.w_o"), &[din, dout], bound(din), rng)?;
            }
            EncoderKind::Compgcn => {
                for dir in ["w_orig", "w_inv", "w_self", "w_rel"] {
                    store.insert_uniform(format!("compgcn.{k}.{dir}"), &[din, dout], bound(din), rng)?;
                }
            }
            EncoderKind::Kbgat => {
                store.insert_uniform(format!("kbgat.{k}.w1"), &[3 * din, dout], bound(3 * din), rng)?;
                store.insert_uniform(format!("kbgat.{k}.w2"), &[1, dout], bound(dout), rng)?;
            }
        }
    }
    Ok(())
}

fn activate<T: Real>(tape: &mut Tape<T>, x: NodeId, g: Activation) -> Result<NodeId> {
    match g {
        Activation::Tanh => tape.tanh(x),
        Activation::Relu => tape.relu(x),
        Activation::Identity => Ok(x),
    }
}

pub(crate) fn encode<T: Real>(
    cfg: &EncoderConfig,
    graph: &EncoderGraph,
    tape: &mut Tape<T>,
    store: &ParameterStore<T>,
) -> Result<Encoded> {
    let mut x = tape.param(store, ENTITY)?;
    let mut r = tape.param(store, RELATION)?;
    for k in 0..cfg.layers {
        match cfg.kind {
            EncoderKind::Mlp => {
                let (nx, nr) = mlp_layer(cfg, k, tape, store, x, r)?;
                x = nx;
                r = nr;
            }
            EncoderKind::Rgcn => x = rgcn_layer(cfg, k, graph, tape, store, x)?,
            EncoderKind::Compgcn => {
                let (nx, nr) = compgcn_layer(cfg, k, graph, tape, store, x, r)?;
                x = nx;
                r = nr;
            }
            EncoderKind::Kbgat => x = kbgat_layer(cfg, k, graph, tape, store, x, r)?,
        }
    }
    Ok(Encoded {
        entities: x,
        relations: r,
    })
}

pub(crate) fn mlp_layer<T: Real>(
    cfg: &EncoderConfig,
    k: usize,
    tape: &mut Tape<T>,
    store: &ParameterStore<T>,
    x: NodeId,
    r: NodeId,
) -> Result<(NodeId, NodeId)> {
    let we = tape.param(store, &format!("mlp.{k}.ent"))?;
    let wr = tape.param(store, &format!("mlp.{k}.rel"))?;
    let xw = tape.matmul(x, we)?;
    let rw = tape.matmul(r, wr)?;
    Ok((activate(tape, xw, cfg.activation)?, activate(tape, rw, cfg.activation)?))
}

pub(crate) fn rgcn_layer<T: Real>(
    cfg: &EncoderConfig,
    k: usize,
    graph: &EncoderGraph,
    tape: &mut Tape<T>,
    store: &ParameterStore<T>,
    x: NodeId,
) -> Result<NodeId> {
    let wo = tape.param(store, &format!("rgcn.{k}.w_o"))?;
    let mut total = tape.matmul(x, wo)?;
    if !graph.rgcn_groups.is_empty() {
        let mut parts = Vec::with_capacity(graph.rgcn_groups.len());
        for group in &graph.rgcn_groups {
            let w = tape.param(store, &format!("rgcn.{k}.w{}", group.rel))?;
            let rows = tape.gather(x, group.neighbors.clone())?;
            parts.push(tape.matmul(rows, w)?);
        }
        let messages = if parts.len() == 1 { parts[0] } else { tape.concat(&parts, 0)? };
        let weights: Arc<[T]> = graph.rgcn_weights.iter().map(|&w| T::lit(w)).collect();
        let agg = tape.scatter_add_scaled(
            messages,
            graph.rgcn_targets.clone(),
            weights,
            graph.num_entities(),
        )?;
        total = tape.add(agg, total)?;
    }
    activate(tape, total, cfg.activation)
}

pub(crate) fn compgcn_layer<T: Real>(
    cfg: &EncoderConfig,
    k: usize,
    graph: &EncoderGraph,
    tape: &mut Tape<T>,
    store: &ParameterStore<T>,
    x: NodeId,
    r: NodeId,
) -> Result<(NodeId, NodeId)> {
    let mut parts = Vec::with_capacity(3);
    let mut targets = Vec::new();
    for (group, name) in graph.compgcn.iter().zip(["w_orig", "w_inv", "w_self"]) {
        if group.targets.is_empty() {
            continue;
        }
        let w = tape.param(store, &format!("compgcn.{k}.{name}"))?;
        let xr = tape.gather(r, group.relations.clone())?;
        let xh = tape.gather(x, group.neighbors.clone())?;
        // phi(x_h, x_r): correlating the relation against the entity makes the unit impulse
        // relation an identity composition.
        let phi = tape.ccorr(xr, xh)?;
        parts.push(tape.matmul(phi, w)?);
        targets.extend_from_slice(&group.targets);
    }
    let messages = if parts.len() == 1 { parts[0] } else { tape.concat(&parts, 0)? };
    let agg = tape.scatter_add(messages, targets, graph.num_entities())?;
    let x_next = activate(tape, agg, cfg.activation)?;
    let wrel = tape.param(store, &format!("compgcn.{k}.w_rel"))?;
    let r_next = tape.matmul(r, wrel)?;
    Ok((x_next, r_next))
}

pub(crate) fn kbgat_layer<T: Real>(
    cfg: &EncoderConfig,
    k: usize,
    graph: &EncoderGraph,
    tape: &mut Tape<T>,
    store: &ParameterStore<T>,
    x: NodeId,
    r: NodeId,
) -> Result<NodeId> {
    let (c, alpha) = kbgat_attention(cfg, k, graph, tape, store, x, r)?;
    let width = tape.shape(c)[1];
    let ones = tape.constant(Tensor::full(&[1, width], T::one()))?;
    let alpha_wide = tape.matmul(alpha, ones)?;
    let weighted = tape.mul(alpha_wide, c)?;
    let agg = tape.scatter_add(weighted, graph.kbgat_centers.clone(), graph.num_entities())?;
    activate(tape, agg, cfg.activation)
}

/// Edge features `c` (E x d') and attention weights (E x 1), edges ordered by center entity.
pub(crate) fn kbgat_attention<T: Real>(
    cfg: &EncoderConfig,
    k: usize,
    graph: &EncoderGraph,
    tape: &mut Tape<T>,
    store: &ParameterStore<T>,
    x: NodeId,
    r: NodeId,
) -> Result<(NodeId, NodeId)> {
    let w1 = tape.param(store, &format!("kbgat.{k}.w1"))?;
    let w2 = tape.param(store, &format!("kbgat.{k}.w2"))?;
    let xh = tape.gather(x, graph.kbgat_centers.clone())?;
    let xt = tape.gather(x, graph.kbgat_neighbors.clone())?;
    let xr = tape.gather(r, graph.kbgat_relations.clone())?;
    let cat = tape.concat(&[xh, xt, xr], 1)?;
    let c = tape.matmul(cat, w1)?;
    let logits = tape.matmul_nt(c, w2)?;
    let leaky = tape.leaky_relu(logits, T::lit(cfg.leaky_slope))?;
    let alpha = tape.segment_softmax(leaky, graph.kbgat_offsets.clone())?;
    Ok((c, alpha))
}
