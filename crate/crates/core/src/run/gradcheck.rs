//! Gradient checks of every encoder and scorer composition on a small fixed graph.

use std::time::{Duration, Instant};

use crate::autodiff::{check_gradients, GradCheckReport, Tensor};
use crate::data::{GraphMode, KnowledgeGraph, RawTriple};
use crate::error::Result;
use crate::model::{EncoderConfig, EncoderKind, Model, ModelConfig, ScorerConfig, ScorerKind};

pub const GRADCHECK_DIM: usize = 8;
pub const GRADCHECK_EPS: f64 = 1e-4;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Parameter draw whose ReLU preactivations all sit outside the difference stencil.
pub const GRADCHECK_PARAM_SEED: u64 = 18;

/// Eight entities, three relations, twenty training triples.
pub fn toy_graph() -> KnowledgeGraph {
    let t = |h: usize, r: usize, t: usize| RawTriple::new(&format!("e{h}"), &format!("r{r}"), &format!("e{t}"));
    let train: Vec<RawTriple> = (0..20).map(|i| t(i % 8, i % 3, (i * 3 + 1) % 8)).collect();
    KnowledgeGraph::from_raw("toy", &train, &[t(0, 1, 5)], &[t(2, 2, 6)]).expect("toy graph is valid")
}

#[derive(Debug, Clone)]
pub struct GradcheckRow {
    pub encoder: EncoderKind,
    pub scorer: ScorerKind,
    pub report: GradCheckReport,
    pub elapsed: Duration,
}

impl GradcheckRow {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error < GRADCHECK_TOLERANCE
    }
}

fn scorer_for(kind: ScorerKind) -> ScorerConfig {
    match kind {
        ScorerKind::Distmult => ScorerConfig::distmult(),
        ScorerKind::Conve => ScorerConfig::conve(2, 4, 2, 2),
    }
}

/// Max relative error of one composition in double precision.
///
/// The scalar is a fixed-weight sum of all-tail scores for six queries in both directions.
/// `inject` flips the sign of one primitive's adjoint.
pub fn gradcheck_composition(
    kg: &KnowledgeGraph,
    encoder: EncoderKind,
    scorer: ScorerKind,
    inject: Option<&str>,
) -> Result<GradCheckReport> {
    let model = Model::for_graph(
        ModelConfig {
            encoder: EncoderConfig::new(encoder, 2, GRADCHECK_DIM),
            scorer: scorer_for(scorer),
            graph_mode: GraphMode::Original,
        },
        kg,
    )?;
    let params = model.init_params::<f64>(GRADCHECK_PARAM_SEED)?;
    let r = kg.num_relations();
    let heads = [0, 1, 2, 3, 4, 5];
    let rels = [0, 1, 2 % r, r, r + 1, 2 * r - 1];
    let n = kg.num_entities();
    check_gradients(&params, GRADCHECK_EPS, |tape, store| {
        if let Some(op) = inject {
            tape.inject_sign_flip(op);
        }
        let enc = model.encode(tape, store)?;
        let q = model.query(tape, store, enc, &heads, &rels, None)?;
        let scores = model.score_all(tape, store, enc, q)?;
        let w = tape.constant(Tensor::from_fn(&[heads.len(), n], |i| ((i * 7 % 5) as f64 - 2.0) / 2.0))?;
        let weighted = tape.mul(scores, w)?;
        tape.sum(weighted)
    })
}

/// All eight compositions on [`toy_graph`].
pub fn gradcheck_suite(inject: Option<&str>) -> Result<Vec<GradcheckRow>> {
    let kg = toy_graph();
    let mut rows = Vec::new();
    for encoder in [EncoderKind::Mlp, EncoderKind::Rgcn, EncoderKind::Compgcn, EncoderKind::Kbgat] {
        for scorer in [ScorerKind::Distmult, ScorerKind::Conve] {
            let start = Instant::now();
            let report = gradcheck_composition(&kg, encoder, scorer, inject)?;
            rows.push(GradcheckRow {
                encoder,
                scorer,
                report,
                elapsed: start.elapsed(),
            });
        }
    }
    Ok(rows)
}
