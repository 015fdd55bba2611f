//! Evaluation of an ensemble spec against each member alone.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{KnowledgeGraph, Split};
use crate::ensemble::{load_member, Ensemble, EnsembleSpec, LoadedMember};
use crate::error::{KgcError, Result};
use crate::eval::{evaluate, render_table, MetricsReport, SeedMetrics, TableRow};
use crate::model::EncoderKind;

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleRow {
    pub label: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleOutcome {
    /// Each member, then the best single member, then the ensemble.
    pub rows: Vec<EnsembleRow>,
    pub ensemble: MetricsReport,
    #[serde(skip)]
    pub table: String,
}

/// Loads the dataset named by `dataset` or the ensemble file and runs [`run_ensemble_on`].
pub fn run_ensemble(
    spec: &EnsembleSpec,
    dataset: Option<&Path>,
    seeds: &[u64],
    split: Split,
    log: &mut dyn FnMut(&str),
) -> Result<EnsembleOutcome> {
    let Some(dir) = dataset.or(spec.dataset.as_deref()) else {
        return Err(KgcError::config("ensemble: no dataset given in the ensemble file or on the command line"));
    };
    let kg = KnowledgeGraph::load_dir(dir)?;
    run_ensemble_on(spec, &kg, seeds, split, log)
}

/// Evaluates every member and the score-sum ensemble for each seed.
///
/// A spec without `{seed}` placeholders is evaluated once under the first seed.
pub fn run_ensemble_on(
    spec: &EnsembleSpec,
    kg: &KnowledgeGraph,
    seeds: &[u64],
    split: Split,
    log: &mut dyn FnMut(&str),
) -> Result<EnsembleOutcome> {
    if seeds.is_empty() {
        return Err(KgcError::config("seeds: at least one seed is required"));
    }
    let seeds = if spec.is_seeded() { seeds } else { &seeds[..1] };
    let triples = kg.split(split);
    let n_members = spec.members.len();
    let mut member_seeds: Vec<Vec<SeedMetrics>> = vec![Vec::new(); n_members];
    let mut member_hash = vec![String::new(); n_members];
    let mut labels = vec![String::new(); n_members];
    let mut all_mlp = true;
    let mut ensemble_seeds = Vec::new();
    let mut fingerprints = Vec::new();

    for &seed in seeds {
        let loaded: Vec<LoadedMember> = spec
            .member_paths(seed)
            .iter()
            .map(|p| load_member(p, kg, spec.vocab_hash.as_deref()))
            .collect::<Result<_>>()?;
        for (i, m) in loaded.iter().enumerate() {
            log(&format!("seed {seed}: {}", m.path.display()));
            let e = evaluate(m.frozen.as_ref(), triples, &kg.filter, kg.num_relations())?;
            member_seeds[i].push(SeedMetrics {
                seed,
                metrics: e.pooled,
                direction_split: e.split,
            });
            member_hash[i] = m.header.config_hash.clone();
            labels[i] = m.checkpoint_label.clone();
            all_mlp &= m.header.model.encoder.kind == EncoderKind::Mlp;
            fingerprints.push(m.member.fingerprint.clone());
        }
        let ensemble = Ensemble::new(loaded.into_iter().map(|m| m.member).collect())?;
        let e = evaluate(&ensemble, triples, &kg.filter, kg.num_relations())?;
        log(&format!("seed {seed}: ensemble of {} distinct members, MRR {:.4}", ensemble.distinct(), e.pooled.mrr));
        ensemble_seeds.push(SeedMetrics {
            seed,
            metrics: e.pooled,
            direction_split: e.split,
        });
    }

    let split_name = split.to_string();
    let mut rows: Vec<EnsembleRow> = member_seeds
        .into_iter()
        .zip(member_hash)
        .zip(labels)
        .map(|((per_seed, hash), label)| EnsembleRow {
            label,
            report: MetricsReport::from_seeds(kg.name.clone(), split_name.clone(), hash, per_seed),
        })
        .collect();
    let best = rows
        .iter()
        .max_by(|a, b| a.report.mrr.total_cmp(&b.report.mrr))
        .map(|r| r.report.clone())
        .expect("spec has members");
    fingerprints.sort();
    let hash = hex::encode(Sha256::digest(fingerprints.join("\n").as_bytes()));
    let ensemble = MetricsReport::from_seeds(kg.name.clone(), split_name, hash, ensemble_seeds);
    let prefix = if all_mlp { "MLP-" } else { "" };
    rows.push(EnsembleRow {
        label: if all_mlp { "MLP-best".into() } else { "Best".into() },
        report: best,
    });
    rows.push(EnsembleRow {
        label: format!("{prefix}{}", if all_mlp { "ensemble" } else { "Ensemble" }),
        report: ensemble.clone(),
    });
    let table = render_table(
        &rows
            .iter()
            .map(|r| TableRow::new(r.label.clone(), Some(r.report.clone())))
            .collect::<Vec<_>>(),
    );
    Ok(EnsembleOutcome { rows, ensemble, table })
}

