//! Score-sum ensembles of trained models and the key-value spec format.
//!
//! ```text
//! # comment
//! dataset = data/FB15k-237
//! vocab_hash = 3f2a...          (optional)
//! member = ../runs/a/seed-{seed}/checkpoint.kgc
//! member = ../runs/b/seed-{seed}/checkpoint.kgc
//! ```
//!
//! Relative paths resolve against the ensemble file's directory. `{seed}` is replaced per seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::data::KnowledgeGraph;
use crate::error::{KgcError, Result};
use crate::model::{FrozenModel, Model, TailScorer};
use crate::train::{Checkpoint, CheckpointHeader};

/// One scorer plus an identity used to detect duplicates.
#[derive(Clone)]
pub struct Member {
    pub label: String,
    pub fingerprint: String,
    pub scorer: Arc<dyn TailScorer>,
}

/// Unweighted sum of member scores.
///
/// Members with the same fingerprint are merged into one term with a multiplicity, and terms
/// are summed in fingerprint order in f64, so the result does not depend on member order and
/// duplicating every member scales each row exactly.
pub struct Ensemble {
    terms: Vec<(Arc<dyn TailScorer>, u32)>,
    common: u32,
    num_entities: usize,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 { a } else { gcd(b, a % b) }
}

impl Ensemble {
    pub fn new(members: Vec<Member>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(KgcError::config("ensemble: no members"));
        };
        let num_entities = first.scorer.num_entities();
        if let Some(m) = members.iter().find(|m| m.scorer.num_entities() != num_entities) {
            return Err(KgcError::config(format!(
                "ensemble: member {} scores {} entities, expected {num_entities}",
                m.label,
                m.scorer.num_entities()
            )));
        }
        let mut sorted = members;
        sorted.sort_by(|a, b| a.fingerprint.cmp(&b.fingerprint));
        let mut terms: Vec<(String, Arc<dyn TailScorer>, u32)> = Vec::new();
        for m in sorted {
            match terms.last_mut() {
                Some((fp, _, count)) if *fp == m.fingerprint => *count += 1,
                _ => terms.push((m.fingerprint, m.scorer, 1)),
            }
        }
        let common = terms.iter().fold(0, |g, t| gcd(g, t.2));
        Ok(Ensemble {
            terms: terms.into_iter().map(|(_, s, c)| (s, c)).collect(),
            common,
            num_entities,
        })
    }

    /// Distinct members after merging duplicates.
    pub fn distinct(&self) -> usize {
        self.terms.len()
    }

    fn weighted_sum(&self, queries: &[(usize, usize)], divide: u32) -> Result<Tensor<f32>> {
        let rows: Vec<Result<Tensor<f32>>> = self
            .terms
            .par_iter()
            .map(|(s, _)| s.score_batch(queries))
            .collect();
        let mut acc = vec![0.0f64; queries.len() * self.num_entities];
        for ((_, count), row) in self.terms.iter().zip(rows) {
            let row = row?;
            let w = f64::from(count / divide);
            for (a, &v) in acc.iter_mut().zip(row.data()) {
                *a += w * f64::from(v);
            }
        }
        Tensor::from_vec(&[queries.len(), self.num_entities], acc.into_iter().map(|v| v as f32).collect())
    }
}

impl TailScorer for Ensemble {
    fn num_entities(&self) -> usize {
        self.num_entities
    }

    fn score_batch(&self, queries: &[(usize, usize)]) -> Result<Tensor<f32>> {
        self.weighted_sum(queries, 1)
    }

    /// The sum with the common multiplicity factored out; a positive rescaling of `score_batch`.
    fn rank_scores(&self, queries: &[(usize, usize)]) -> Result<Tensor<f32>> {
        self.weighted_sum(queries, self.common)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsembleSpec {
    pub dataset: Option<PathBuf>,
    pub vocab_hash: Option<String>,
    /// Member paths with `{seed}` left in place.
    pub members: Vec<PathBuf>,
}

impl EnsembleSpec {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut spec = EnsembleSpec {
            dataset: None,
            vocab_hash: None,
            members: Vec::new(),
        };
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() { p } else { base.join(p) }
        };
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(KgcError::config(format!("ensemble: line {}: expected key = value", i + 1)));
            };
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(KgcError::config(format!("ensemble: line {}: empty value for {key}", i + 1)));
            }
            match key {
                "dataset" => spec.dataset = Some(resolve(value)),
                "vocab_hash" => spec.vocab_hash = Some(value.to_owned()),
                "member" => spec.members.push(resolve(value)),
                other => {
                    return Err(KgcError::config(format!("ensemble: line {}: unknown key {other:?}", i + 1)))
                }
            }
        }
        if spec.members.is_empty() {
            return Err(KgcError::config("ensemble: no member lines"));
        }
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| KgcError::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Whether any member path depends on the seed.
    pub fn is_seeded(&self) -> bool {
        self.members.iter().any(|p| p.to_string_lossy().contains("{seed}"))
    }

    pub fn member_paths(&self, seed: u64) -> Vec<PathBuf> {
        self.members
            .iter()
            .map(|p| PathBuf::from(p.to_string_lossy().replace("{seed}", &seed.to_string())))
            .collect()
    }
}

/// A loaded checkpoint together with the scorer built from it.
pub struct LoadedMember {
    pub path: PathBuf,
    pub checkpoint_label: String,
    pub header: CheckpointHeader,
    pub member: Member,
    pub frozen: Arc<FrozenModel>,
}

/// Loads a checkpoint, checks it against `kg`, and encodes it.
pub fn load_member(path: &Path, kg: &KnowledgeGraph, expected_vocab: Option<&str>) -> Result<LoadedMember> {
    if !path.is_file() {
        return Err(KgcError::config(format!("ensemble: member {} not found", path.display())));
    }
    let bytes = fs::read(path).map_err(|e| KgcError::io(path, e))?;
    let ckpt = Checkpoint::from_bytes(&bytes)?;
    let vocab = kg.vocab.hash();
    if ckpt.header.vocab_hash != vocab || expected_vocab.is_some_and(|v| v != vocab) {
        return Err(KgcError::config(format!(
            "ensemble: vocabulary of {} does not match dataset {}",
            path.display(),
            kg.name
        )));
    }
    let model = Model::for_graph(ckpt.header.model.clone(), kg)?;
    let frozen = Arc::new(model.freeze(Arc::new(ckpt.params))?);
    let label = format!("{} {}", ckpt.header.model.label(), ckpt.header.loss.label());
    Ok(LoadedMember {
        path: path.to_owned(),
        checkpoint_label: label.clone(),
        header: ckpt.header,
        member: Member {
            label,
            fingerprint: hex::encode(Sha256::digest(&bytes)),
            scorer: frozen.clone(),
        },
        frozen,
    })
}
