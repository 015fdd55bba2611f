//! Side-by-side runs of a base configuration and its ablated variants.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::config::RunConfig;
use super::{run_train_on, write_json};
use crate::data::{GraphMode, KnowledgeGraph};
use crate::error::{KgcError, Result};
use crate::eval::{render_table, MetricsReport, TableRow};
use crate::io::write_atomic;
use crate::model::{EncoderKind, ScorerConfig, ScorerKind};
use crate::train::{LossConfig, NegativeCount};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationMode {
    /// The configured encoder against an MLP of the same widths.
    MlpSwap,
    /// The original message-passing graph against a random one with the same edge count.
    RandomGraph,
    /// Sampled BCE at k = 10, 50, 200, 0.5N and N.
    NegSweep,
    /// DistMult against ConvE on the same encoder.
    ScorerSwap,
}

impl FromStr for AblationMode {
    type Err = KgcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp_swap" => Ok(AblationMode::MlpSwap),
            "random_graph" => Ok(AblationMode::RandomGraph),
            "neg_sweep" => Ok(AblationMode::NegSweep),
            "scorer_swap" => Ok(AblationMode::ScorerSwap),
            other => Err(KgcError::config(format!(
                "ablate: unknown mode {other:?} (expected mlp_swap, random_graph, neg_sweep, scorer_swap)"
            ))),
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationMode::MlpSwap => "mlp_swap",
            AblationMode::RandomGraph => "random_graph",
            AblationMode::NegSweep => "neg_sweep",
            AblationMode::ScorerSwap => "scorer_swap",
        })
    }
}

/// ConvE reshape for width `d`: the most square factorization with rows <= cols.
pub fn conve_for_dim(d: usize) -> ScorerConfig {
    let rows = (1..=d).filter(|&r| d.is_multiple_of(r) && r * r <= d).max().unwrap_or(1);
    let cols = d / rows;
    ScorerConfig::conve(rows, cols, 32, 3.min(cols).min(2 * rows))
}

fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect()
}

/// Row labels with their configurations; `None` marks a variant infeasible on `kg`.
pub fn ablation_variants(
    base: &RunConfig,
    mode: AblationMode,
    kg: &KnowledgeGraph,
) -> Result<Vec<(String, Option<RunConfig>)>> {
    let variant = |label: &str, f: &dyn Fn(&mut RunConfig)| {
        let mut cfg = base.clone();
        f(&mut cfg);
        cfg.name = Some(label.to_owned());
        cfg.out = base.out.join(slug(label));
        cfg
    };
    let rows = match mode {
        AblationMode::MlpSwap => {
            if base.encoder.kind == EncoderKind::Mlp {
                return Err(KgcError::config("ablate: mlp_swap needs a message-passing encoder"));
            }
            let name = base.encoder.kind.label();
            vec![
                (name.to_owned(), Some(variant(name, &|_| {}))),
                (format!("{name}-MLP"), Some(variant(&format!("{name}-MLP"), &|c| c.encoder.kind = EncoderKind::Mlp))),
            ]
        }
        AblationMode::RandomGraph => {
            let seed = match base.graph_mode {
                GraphMode::Random { seed } => seed,
                _ => 0,
            };
            vec![
                ("Original".into(), Some(variant("Original", &|c| c.graph_mode = GraphMode::Original))),
                ("Random".into(), Some(variant("Random", &|c| c.graph_mode = GraphMode::Random { seed }))),
            ]
        }
        AblationMode::NegSweep => [
            NegativeCount::Fixed(10),
            NegativeCount::Fixed(50),
            NegativeCount::Fixed(200),
            NegativeCount::Half,
            NegativeCount::All,
        ]
        .into_iter()
        .map(|k| {
            let label = k.to_string();
            let cfg = k
                .resolve(kg.num_entities())
                .ok()
                .map(|_| variant(&format!("k{label}"), &|c| c.loss = LossConfig::with_sampling(k)));
            (label, cfg.map(|mut c| {
                c.name = Some(k.to_string());
                c
            }))
        })
        .collect(),
        AblationMode::ScorerSwap => {
            let dim = base.encoder.output_dim();
            [ScorerKind::Distmult, ScorerKind::Conve]
                .into_iter()
                .map(|kind| {
                    let scorer = if base.scorer.kind == kind {
                        base.scorer.clone()
                    } else {
                        match kind {
                            ScorerKind::Distmult => ScorerConfig::distmult(),
                            ScorerKind::Conve => conve_for_dim(dim),
                        }
                    };
                    let label = kind.label();
                    (label.to_owned(), Some(variant(label, &|c| c.scorer = scorer.clone())))
                })
                .collect()
        }
    };
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationOutcome {
    pub mode: String,
    pub rows: Vec<AblationRowReport>,
    #[serde(skip)]
    pub table: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRowReport {
    pub label: String,
    pub report: Option<MetricsReport>,
}

/// Runs every feasible variant over the base seeds and writes `ablation.json` and
/// `ablation.txt` into the base output directory.
pub fn run_ablation(
    base: &RunConfig,
    mode: AblationMode,
    kg: &KnowledgeGraph,
    log: &mut dyn FnMut(&str),
) -> Result<AblationOutcome> {
    base.validate()?;
    let variants = ablation_variants(base, mode, kg)?;
    for (_, cfg) in &variants {
        if let Some(cfg) = cfg {
            cfg.validate()?;
            cfg.validate_for(kg)?;
        }
    }
    let mut rows = Vec::new();
    for (label, cfg) in variants {
        let report = match cfg {
            Some(cfg) => Some(run_train_on(&cfg, kg, log)?.test),
            None => {
                log(&format!("{label}: infeasible on {} entities, skipped", kg.num_entities()));
                None
            }
        };
        rows.push(AblationRowReport { label, report });
    }
    let table = render_table(
        &rows
            .iter()
            .map(|r| TableRow::new(r.label.clone(), r.report.clone()))
            .collect::<Vec<_>>(),
    );
    let outcome = AblationOutcome {
        mode: mode.to_string(),
        rows,
        table,
    };
    write_json(base.out.join("ablation.json"), &outcome)?;
    write_atomic(base.out.join("ablation.txt"), outcome.table.as_bytes())?;
    Ok(outcome)
}
