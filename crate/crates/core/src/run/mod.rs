//! Config-driven runs: training over seeds, checkpoint evaluation, ablations, ensembles
//! and the gradient-check suite. Everything the `kgc` binary does lives here.

mod ablate;
mod config;
mod ensemble;
mod gradcheck;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use ablate::{ablation_variants, conve_for_dim, run_ablation, AblationMode, AblationOutcome, AblationRowReport};
pub use config::{config_hash, RunConfig};
pub use ensemble::{run_ensemble, run_ensemble_on, EnsembleOutcome, EnsembleRow};
pub use gradcheck::{
    gradcheck_composition, gradcheck_suite, toy_graph, GradcheckRow, GRADCHECK_DIM, GRADCHECK_EPS,
    GRADCHECK_PARAM_SEED, GRADCHECK_TOLERANCE,
};

use crate::data::{known_stats, KnowledgeGraph, Split};
use crate::error::{KgcError, Result};
use crate::eval::{evaluate, render_table, MetricsReport, SeedMetrics, TableRow};
use crate::io::write_atomic;
use crate::model::Model;
use crate::train::{train, Checkpoint, CheckpointHeader};

pub const CHECKPOINT_FILE: &str = "checkpoint.kgc";

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

pub fn checkpoint_path(out: &Path, seed: u64) -> PathBuf {
    seed_dir(out, seed).join(CHECKPOINT_FILE)
}

pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("values serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Identity of a run directory's inputs.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub dataset: String,
    pub vocab_hash: String,
    pub content_hash: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub test: MetricsReport,
    pub valid: MetricsReport,
}

/// Evaluates a checkpoint on one split of `kg`; the report carries the checkpoint's seed.
pub fn evaluate_checkpoint(path: &Path, kg: &KnowledgeGraph, split: Split) -> Result<MetricsReport> {
    if !path.is_file() {
        return Err(KgcError::config(format!("checkpoint {} not found", path.display())));
    }
    let ckpt = Checkpoint::load(path)?;
    if ckpt.header.vocab_hash != kg.vocab.hash() {
        return Err(KgcError::config(format!(
            "checkpoint {} was trained on a different vocabulary than {}",
            path.display(),
            kg.name
        )));
    }
    let model = Model::for_graph(ckpt.header.model.clone(), kg)?;
    let frozen = model.freeze(std::sync::Arc::new(ckpt.params))?;
    let e = evaluate(&frozen, kg.split(split), &kg.filter, kg.num_relations())?;
    Ok(MetricsReport::from_seeds(
        kg.name.clone(),
        split.to_string(),
        ckpt.header.config_hash,
        vec![SeedMetrics {
            seed: ckpt.header.seed,
            metrics: e.pooled,
            direction_split: e.split,
        }],
    ))
}

/// Trains every seed of `cfg` into `cfg.out` and evaluates the kept checkpoints.
///
/// Layout: `config.json`, `manifest.json`, `seed-N/{checkpoint.kgc, history.json,
/// report.json, valid_report.json}`, and the aggregate `report.json`, `valid_report.json`
/// and `report.txt`.
pub fn run_train(cfg: &RunConfig, log: &mut dyn FnMut(&str)) -> Result<RunOutcome> {
    cfg.validate()?;
    let kg = KnowledgeGraph::load_dir(&cfg.dataset)?;
    run_train_on(cfg, &kg, log)
}

/// As [`run_train`] with the dataset already loaded.
pub fn run_train_on(cfg: &RunConfig, kg: &KnowledgeGraph, log: &mut dyn FnMut(&str)) -> Result<RunOutcome> {
    cfg.validate()?;
    cfg.validate_for(kg)?;
    if let Some(stats) = known_stats(&kg.name) {
        for problem in kg.check_stats(stats) {
            log(&format!("warning: {}: {problem}", kg.name));
        }
    }
    let model = Model::for_graph(cfg.model_config(), kg)?;
    let hash = config_hash(cfg, kg);
    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| KgcError::io(out, e))?;
    write_json(out.join("config.json"), cfg)?;
    write_json(
        out.join("manifest.json"),
        &Manifest {
            dataset: kg.name.clone(),
            vocab_hash: kg.vocab.hash(),
            content_hash: kg.content_hash.clone(),
            config_hash: hash.clone(),
            seeds: cfg.seeds.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
    )?;

    let mut tests = Vec::new();
    let mut valids = Vec::new();
    let mut checkpoints = Vec::new();
    for &seed in &cfg.seeds {
        log(&format!("{}: seed {seed}", cfg.label()));
        let trained = train(&model, kg, &cfg.loss, &cfg.train, seed, &mut |e| {
            let valid = e.valid_mrr.map(|m| format!(", valid MRR {m:.4}")).unwrap_or_default();
            log(&format!("  epoch {}: loss {:.6}{valid}", e.epoch, e.loss));
        })?;
        let header = CheckpointHeader {
            model: cfg.model_config(),
            loss: cfg.loss,
            dataset: kg.name.clone(),
            num_entities: kg.num_entities(),
            num_relations: kg.num_relations(),
            vocab_hash: kg.vocab.hash(),
            config_hash: hash.clone(),
            seed,
            epoch: trained.best_epoch,
            best_valid_mrr: trained.best_valid_mrr,
            tensors: vec![],
        };
        let path = checkpoint_path(out, seed);
        Checkpoint::new(header, trained.params).save(&path)?;
        write_json(seed_dir(out, seed).join("history.json"), &trained.history)?;
        let test = evaluate_checkpoint(&path, kg, Split::Test)?;
        let valid = evaluate_checkpoint(&path, kg, Split::Valid)?;
        write_json(seed_dir(out, seed).join("report.json"), &test)?;
        write_json(seed_dir(out, seed).join("valid_report.json"), &valid)?;
        log(&format!("  best epoch {}, test MRR {:.4}", trained.best_epoch, test.mrr));
        tests.push(test);
        valids.push(valid);
        checkpoints.push(path);
    }
    let test = MetricsReport::merge(&tests).expect("at least one seed");
    let valid = MetricsReport::merge(&valids).expect("at least one seed");
    write_json(out.join("report.json"), &test)?;
    write_json(out.join("valid_report.json"), &valid)?;
    let table = render_table(&[TableRow::new(cfg.label(), Some(test.clone()))]);
    write_atomic(out.join("report.txt"), table.as_bytes())?;
    Ok(RunOutcome {
        dir: out.clone(),
        checkpoints,
        test,
        valid,
    })
}
