//! Encoders, scorers and the model that composes them.

mod config;
mod encoders;
mod graph;
mod scorers;

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{
    Activation, DiagonalSource, EncoderConfig, EncoderKind, ModelConfig, ScorerConfig, ScorerKind,
};
pub use encoders::{Encoded, ENTITY, RELATION};
pub use graph::EncoderGraph;
pub use scorers::{DIAGONAL, FILTERS, PROJECTION, TAIL_BIAS};

use crate::autodiff::{NodeId, ParameterStore, Real, Tape, Tensor};
use crate::data::{Adjacency, KnowledgeGraph};
use crate::error::{KgcError, Result};

/// Anything that scores every entity as the tail of a batch of `(head, relation)` queries.
pub trait TailScorer: Send + Sync {
    fn num_entities(&self) -> usize;

    /// `B x N` scores, row `i` for `queries[i]`.
    fn score_batch(&self, queries: &[(usize, usize)]) -> Result<Tensor<f32>>;

    /// Rows that order candidates exactly as `score_batch` does; used for ranking.
    fn rank_scores(&self, queries: &[(usize, usize)]) -> Result<Tensor<f32>> {
        self.score_batch(queries)
    }
}

/// A validated configuration bound to a graph.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    graph: Arc<EncoderGraph>,
    diagonal: DiagonalSource,
}

impl Model {
    pub fn new(config: ModelConfig, adjacency: &Adjacency, num_relations: usize) -> Result<Self> {
        config.validate()?;
        let graph = EncoderGraph::new(adjacency, num_relations)?;
        let diagonal = config.scorer.diagonal_for(config.encoder.kind);
        Ok(Model {
            config,
            graph: Arc::new(graph),
            diagonal,
        })
    }

    /// Builds the message-passing graph selected by `config.graph_mode`.
    pub fn for_graph(config: ModelConfig, kg: &KnowledgeGraph) -> Result<Self> {
        let adjacency = kg.adjacency(config.graph_mode)?;
        Self::new(config, &adjacency, kg.num_relations())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn graph(&self) -> &EncoderGraph {
        &self.graph
    }

    pub fn num_entities(&self) -> usize {
        self.graph.num_entities()
    }

    pub fn num_relations(&self) -> usize {
        self.graph.num_relations()
    }

    pub fn diagonal(&self) -> DiagonalSource {
        self.diagonal
    }

    /// Fresh parameters drawn from `seed`.
    pub fn init_params<T: Real>(&self, seed: u64) -> Result<ParameterStore<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new(seed);
        encoders::init_encoder(&self.config.encoder, &self.graph, &mut store, &mut rng)?;
        scorers::init_scorer(
            &self.config.scorer,
            self.diagonal,
            self.config.encoder.output_dim(),
            &self.graph,
            &mut store,
            &mut rng,
        )?;
        Ok(store)
    }

    /// Checks that `store` has exactly the parameters this model creates.
    pub fn check_params<T: Real>(&self, store: &ParameterStore<T>) -> Result<()> {
        let expected = self.init_params::<f32>(0)?;
        let mismatch = expected.len() != store.len()
            || expected
                .iter()
                .any(|(name, t)| store.get(name).map(|s| s.shape()) != Some(t.shape()));
        if mismatch {
            return Err(KgcError::Checkpoint(format!(
                "parameters do not match {} on N={}, R={}",
                self.config.label(),
                self.num_entities(),
                self.num_relations()
            )));
        }
        Ok(())
    }

    pub fn encode<T: Real>(&self, tape: &mut Tape<T>, store: &ParameterStore<T>) -> Result<Encoded> {
        encoders::encode(&self.config.encoder, &self.graph, tape, store)
    }

    /// Query vectors for `(heads[i], rels[i])`. Dropout is applied only when `rng` is given.
    pub fn query<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        enc: Encoded,
        heads: &[usize],
        rels: &[usize],
        rng: Option<&mut dyn RngCore>,
    ) -> Result<NodeId> {
        scorers::query(
            &self.config.scorer,
            self.diagonal,
            &self.graph,
            tape,
            store,
            enc,
            heads,
            rels,
            rng,
        )
    }

    /// `B x N` scores for every candidate tail.
    pub fn score_all<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        enc: Encoded,
        q: NodeId,
    ) -> Result<NodeId> {
        scorers::score_all(&self.config.scorer, tape, store, enc, q)
    }

    /// `M x 1` scores of `candidates[j]` against query row `query_rows[j]`.
    pub fn score_pairs<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        enc: Encoded,
        q: NodeId,
        query_rows: &[usize],
        candidates: &[usize],
    ) -> Result<NodeId> {
        scorers::score_pairs(&self.config.scorer, tape, store, enc, q, query_rows, candidates)
    }

    /// Encodes once and keeps the result for repeated inference.
    pub fn freeze(&self, params: Arc<ParameterStore<f32>>) -> Result<FrozenModel> {
        self.check_params(&params)?;
        let mut tape = Tape::new();
        let enc = self.encode(&mut tape, &params)?;
        Ok(FrozenModel {
            model: self.clone(),
            entities: tape.value_shared(enc.entities),
            relations: tape.value_shared(enc.relations),
            params,
        })
    }
}

/// Encoded embeddings plus scorer parameters; scoring needs no further message passing.
#[derive(Debug, Clone)]
pub struct FrozenModel {
    model: Model,
    params: Arc<ParameterStore<f32>>,
    entities: Arc<Tensor<f32>>,
    relations: Arc<Tensor<f32>>,
}

impl FrozenModel {
    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn params(&self) -> &ParameterStore<f32> {
        &self.params
    }

    pub fn entities(&self) -> &Tensor<f32> {
        &self.entities
    }

    pub fn relations(&self) -> &Tensor<f32> {
        &self.relations
    }

    /// Score of a single triple through the per-triple path.
    pub fn score_triple(&self, head: usize, rel: usize, tail: usize) -> Result<f32> {
        let mut tape = Tape::new();
        let enc = self.constants(&mut tape)?;
        let q = self.model.query(&mut tape, &self.params, enc, &[head], &[rel], None)?;
        let s = self.model.score_pairs(&mut tape, &self.params, enc, q, &[0], &[tail])?;
        Ok(tape.value(s).data()[0])
    }

    fn constants(&self, tape: &mut Tape<f32>) -> Result<Encoded> {
        Ok(Encoded {
            entities: tape.constant_shared(self.entities.clone())?,
            relations: tape.constant_shared(self.relations.clone())?,
        })
    }
}

impl TailScorer for FrozenModel {
    fn num_entities(&self) -> usize {
        self.model.num_entities()
    }

    fn score_batch(&self, queries: &[(usize, usize)]) -> Result<Tensor<f32>> {
        let (heads, rels): (Vec<usize>, Vec<usize>) = queries.iter().copied().unzip();
        let mut tape = Tape::new();
        let enc = self.constants(&mut tape)?;
        let q = self.model.query(&mut tape, &self.params, enc, &heads, &rels, None)?;
        let s = self.model.score_all(&mut tape, &self.params, enc, q)?;
        Ok(tape.value(s).clone())
    }
}
