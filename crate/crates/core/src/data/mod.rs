//! Dataset ingestion: vocabularies, inverse augmentation, adjacency and the filter index.

mod filter;
mod graph;
mod triples;
mod vocab;

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub use filter::FilterIndex;
pub use graph::{build_adjacency, self_loop_relation, Adjacency, GraphMode};
pub use triples::{augment_inverse, load_split, RawTriple, Triple};
pub use vocab::Vocab;

use crate::error::{KgcError, Result};

/// Published sizes of the standard benchmarks, used to sanity-check ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetStats {
    pub name: &'static str,
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

pub const KNOWN_DATASETS: &[DatasetStats] = &[
    DatasetStats { name: "FB15k-237", entities: 14_541, relations: 237, train: 272_115, valid: 17_535, test: 20_466 },
    DatasetStats { name: "WN18RR", entities: 40_943, relations: 11, train: 86_835, valid: 3_034, test: 3_134 },
    DatasetStats { name: "WN18", entities: 40_943, relations: 18, train: 141_442, valid: 5_000, test: 5_000 },
    DatasetStats { name: "FB15k", entities: 14_951, relations: 1_345, train: 483_142, valid: 50_000, test: 59_071 },
    DatasetStats { name: "NELL-995", entities: 75_492, relations: 200, train: 126_176, valid: 13_912, test: 14_125 },
];

/// Looks a benchmark up by name, ignoring case and `-`/`_`.
pub fn known_stats(name: &str) -> Option<&'static DatasetStats> {
    let norm = |s: &str| {
        s.chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase()
    };
    let key = norm(name);
    KNOWN_DATASETS.iter().find(|d| norm(d.name) == key)
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    pub name: String,
    pub vocab: Vocab,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    /// Training triples followed by their inverses.
    pub train_aug: Vec<Triple>,
    pub filter: FilterIndex,
    /// SHA-256 over the raw split contents.
    pub content_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::str::FromStr for Split {
    type Err = KgcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(KgcError::config(format!("unknown split {other:?}"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

impl KnowledgeGraph {
    /// Loads `train.txt`, `valid.txt` and `test.txt` from a directory.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(KgcError::config(format!(
                "dataset: {} is not a directory",
                dir.display()
            )));
        }
        let path = |f: &str| -> PathBuf { dir.join(f) };
        let mut hasher = Sha256::new();
        let mut read = |f: &str| -> Result<Vec<RawTriple>> {
            let p = path(f);
            let bytes = fs::read(&p).map_err(|e| KgcError::io(&p, e))?;
            hasher.update(f.as_bytes());
            hasher.update(&bytes);
            let text = String::from_utf8(bytes).map_err(|_| KgcError::Parse {
                path: p.clone(),
                line: 0,
                message: "not valid UTF-8".into(),
            })?;
            triples::parse_split(&text, &p)
        };
        let train = read("train.txt")?;
        let valid = read("valid.txt")?;
        let test = read("test.txt")?;
        let content_hash = hex::encode(hasher.finalize());
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        let mut kg = Self::from_raw(&name, &train, &valid, &test)?;
        kg.content_hash = content_hash;
        Ok(kg)
    }

    pub fn from_raw(
        name: &str,
        train: &[RawTriple],
        valid: &[RawTriple],
        test: &[RawTriple],
    ) -> Result<Self> {
        let vocab = Vocab::build(train, valid, test)?;
        let train = vocab.encode(train)?;
        let valid = vocab.encode(valid)?;
        let test = vocab.encode(test)?;
        let train_aug = augment_inverse(&train, vocab.num_relations());
        let filter = FilterIndex::build(&[&train, &valid, &test], vocab.num_relations());
        Ok(KnowledgeGraph {
            name: name.to_owned(),
            vocab,
            train,
            valid,
            test,
            train_aug,
            filter,
            content_hash: String::new(),
        })
    }

    pub fn num_entities(&self) -> usize {
        self.vocab.num_entities()
    }

    pub fn num_relations(&self) -> usize {
        self.vocab.num_relations()
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn adjacency(&self, mode: GraphMode) -> Result<Adjacency> {
        build_adjacency(&self.train_aug, self.num_entities(), self.num_relations(), mode)
    }

    /// Compares sizes with a known benchmark; returns the mismatching fields.
    pub fn check_stats(&self, stats: &DatasetStats) -> Vec<String> {
        let actual = [
            ("entities", self.num_entities(), stats.entities),
            ("relations", self.num_relations(), stats.relations),
            ("train", self.train.len(), stats.train),
            ("valid", self.valid.len(), stats.valid),
            ("test", self.test.len(), stats.test),
        ];
        actual
            .iter()
            .filter(|(_, got, want)| got != want)
            .map(|(field, got, want)| format!("{field}: {got} (expected {want})"))
            .collect()
    }
}
