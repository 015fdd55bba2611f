//! Triple files and id-level triples.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KgcError, Result};

/// A triple as it appears in a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl RawTriple {
    pub fn new(head: &str, relation: &str, tail: &str) -> Self {
        RawTriple {
            head: head.to_owned(),
            relation: relation.to_owned(),
            tail: tail.to_owned(),
        }
    }
}

/// Id-encoded triple. Inverse relations occupy `[R, 2R)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub rel: usize,
    pub tail: usize,
}

impl Triple {
    pub const fn new(head: usize, rel: usize, tail: usize) -> Self {
        Triple { head, rel, tail }
    }
}

/// Reads a `head<TAB>relation<TAB>tail` file. Blank lines are skipped; duplicates are kept.
pub fn load_split(path: impl AsRef<Path>) -> Result<Vec<RawTriple>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| KgcError::io(path, e))?;
    parse_split(&text, path)
}

pub(crate) fn parse_split(text: &str, path: &Path) -> Result<Vec<RawTriple>> {
    let mut triples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parse_err = |message: String| KgcError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        if fields.len() != 3 {
            return Err(parse_err(format!(
                "expected 3 tab-separated fields, found {}",
                fields.len()
            )));
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(parse_err("empty field".to_owned()));
        }
        triples.push(RawTriple::new(fields[0], fields[1], fields[2]));
    }
    if triples.is_empty() {
        return Err(KgcError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "file contains no triples".to_owned(),
        });
    }
    Ok(triples)
}

/// Appends `(t, r + R, h)` for each `(h, r, t)`, originals first.
pub fn augment_inverse(train: &[Triple], num_relations: usize) -> Vec<Triple> {
    let mut out = Vec::with_capacity(train.len() * 2);
    out.extend_from_slice(train);
    out.extend(
        train
            .iter()
            .map(|t| Triple::new(t.tail, t.rel + num_relations, t.head)),
    );
    out
}
