//! Epoch loop with periodic validation and early stopping.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::loss::batch_loss;
use super::negatives::LossConfig;
use crate::autodiff::{ParameterStore, Real, Tape};
use crate::data::{KnowledgeGraph, Triple};
use crate::error::{KgcError, Result};
use crate::eval::evaluate;
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Validation rounds without improvement before stopping.
    pub patience: usize,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            epochs: 500,
            batch_size: 256,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            weight_decay: adam.weight_decay,
            patience: 20,
            eval_every: 5,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("patience", self.patience),
            ("eval_every", self.eval_every),
        ] {
            if v == 0 {
                return Err(KgcError::config(format!("train: {field} must be positive")));
            }
        }
        self.adam().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean loss per training triple.
    pub loss: f64,
    pub valid_mrr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    /// Parameters at the best validation round, or the last epoch without a validation split.
    pub params: ParameterStore<f32>,
    pub best_epoch: usize,
    pub best_valid_mrr: f64,
    pub history: Vec<EpochLog>,
    pub stopped_early: bool,
}

/// Forward, backward and one optimizer step; returns the batch loss before the update.
pub fn train_batch<T: Real>(
    model: &Model,
    store: &mut ParameterStore<T>,
    adam: &mut Adam<T>,
    batch: &[Triple],
    loss: &LossConfig,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let mut tape = Tape::new();
    let enc = model.encode(&mut tape, store)?;
    let l = batch_loss(model, &mut tape, store, enc, batch, loss, Some(rng))?;
    let value = tape.value(l).data()[0].to_f64().unwrap_or(f64::NAN);
    if !value.is_finite() {
        return Err(KgcError::Numeric(format!("loss diverged to {value}")));
    }
    let grads = tape.backward(l, store)?;
    drop(tape);
    adam.step(store, &grads)?;
    Ok(value)
}

/// Filtered validation MRR of `params`; `None` when the split is empty.
pub fn validation_mrr(model: &Model, kg: &KnowledgeGraph, params: &ParameterStore<f32>) -> Result<Option<f64>> {
    if kg.valid.is_empty() {
        return Ok(None);
    }
    let frozen = model.freeze(Arc::new(params.clone()))?;
    let e = evaluate(&frozen, &kg.valid, &kg.filter, kg.num_relations())?;
    Ok(Some(e.pooled.mrr))
}

/// Trains from `seed` on the augmented training triples of `kg`.
///
/// Validation runs every `eval_every` epochs and after the final epoch; the best round's
/// parameters are kept and training stops once `patience` rounds pass without improvement.
pub fn train(
    model: &Model,
    kg: &KnowledgeGraph,
    loss: &LossConfig,
    cfg: &TrainConfig,
    seed: u64,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<Trained> {
    cfg.validate()?;
    loss.negatives(model.num_entities())?;
    if kg.train_aug.is_empty() {
        return Err(KgcError::config("dataset: no training triples"));
    }
    let mut params = model.init_params::<f32>(seed)?;
    let mut adam = Adam::new(cfg.adam());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut order: Vec<Triple> = kg.train_aug.clone();

    let mut best: Option<(f64, usize, ParameterStore<f32>)> = None;
    let mut since_best = 0usize;
    let mut history = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            total += train_batch(model, &mut params, &mut adam, batch, loss, &mut rng)
                .map_err(|e| match e {
                    KgcError::Numeric(m) => KgcError::Numeric(format!("epoch {epoch}: {m}")),
                    other => other,
                })?;
        }
        let validate_now = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
        let valid_mrr = if validate_now { validation_mrr(model, kg, &params)? } else { None };
        let log = EpochLog {
            epoch,
            loss: total / order.len() as f64,
            valid_mrr,
        };
        on_epoch(&log);
        history.push(log);
        if let Some(mrr) = valid_mrr {
            if best.as_ref().is_none_or(|(b, _, _)| mrr > *b) {
                best = Some((mrr, epoch, params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    stopped_early = epoch < cfg.epochs;
                    break;
                }
            }
        }
    }
    let last_epoch = history.last().map_or(0, |l| l.epoch);
    Ok(match best {
        Some((mrr, epoch, params)) => Trained {
            params,
            best_epoch: epoch,
            best_valid_mrr: mrr,
            history,
            stopped_early,
        },
        None => Trained {
            params,
            best_epoch: last_epoch,
            best_valid_mrr: 0.0,
            history,
            stopped_early,
        },
    })
}
