//! BM25 candidate retrieval over entity and predicate catalogs.

mod eval;
mod index;
mod tokenize;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kgstore::{EntityRecord, PredicateRecord, Snapshot};

pub use eval::{
    parse_grid, recall_at_k, sweep, RecallExample, RecallReport, SweepReport, SweepRow,
};
pub use index::{Index, INDEX_FORMAT_VERSION};
pub use tokenize::tokenize;

/// Candidate list sizes used for retrieval.
pub const DEFAULT_TOP_K: [usize; 2] = [10, 100];

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("invalid BM25 parameters k1={k1}, b={b}: k1 must be >= 0 and b in [0, 1]")]
    InvalidParams { k1: f64, b: f64 },
    #[error("cannot build an index over an empty catalog")]
    EmptyCatalog,
    #[error("duplicate document id {0}")]
    DuplicateId(String),
    #[error("unknown preset {0:?} (expected one of qald10, lcquad2, rubq2, pat)")]
    UnknownPreset(String),
    #[error("invalid grid {0:?}: {1}")]
    InvalidGrid(String, String),
    #[error("index file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CatalogKind {
    Entity,
    Predicate,
}

impl fmt::Display for CatalogKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CatalogKind::Entity => "entity",
            CatalogKind::Predicate => "predicate",
        })
    }
}

/// BM25 saturation (`k1`) and length normalisation (`b`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, RetrievalError> {
        let params = Self { k1, b };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k1.is_finite() && self.k1 >= 0.0 && (0.0..=1.0).contains(&self.b) {
            Ok(())
        } else {
            Err(RetrievalError::InvalidParams {
                k1: self.k1,
                b: self.b,
            })
        }
    }
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// Tuned entity and predicate parameters for one benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub entity: Bm25Params,
    pub predicate: Bm25Params,
}

impl Preset {
    pub fn params(&self, kind: CatalogKind) -> Bm25Params {
        match kind {
            CatalogKind::Entity => self.entity,
            CatalogKind::Predicate => self.predicate,
        }
    }
}

pub const PRESETS: [Preset; 4] = [
    Preset {
        name: "qald10",
        entity: Bm25Params { k1: 2.95, b: 0.2 },
        predicate: Bm25Params { k1: 5.18, b: 0.01 },
    },
    Preset {
        name: "lcquad2",
        entity: Bm25Params { k1: 2.45, b: 0.2 },
        predicate: Bm25Params { k1: 2.95, b: 0.01 },
    },
    Preset {
        name: "rubq2",
        entity: Bm25Params { k1: 1.39, b: 0.4 },
        predicate: Bm25Params { k1: 2.0, b: 0.01 },
    },
    Preset {
        name: "pat",
        entity: Bm25Params { k1: 1.0, b: 0.7 },
        predicate: Bm25Params { k1: 0.1, b: 0.01 },
    },
];

pub fn preset(name: &str) -> Result<&'static Preset, RetrievalError> {
    PRESETS
        .iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| RetrievalError::UnknownPreset(name.to_string()))
}

/// One indexable catalog entry. The searchable text is the label, the
/// description and the aliases joined by spaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogDoc {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl CatalogDoc {
    pub fn text(&self) -> String {
        let mut text = format!("{} {}", self.label, self.description);
        for alias in &self.aliases {
            text.push(' ');
            text.push_str(alias);
        }
        text
    }
}

impl From<&EntityRecord> for CatalogDoc {
    fn from(e: &EntityRecord) -> Self {
        Self {
            id: e.id.clone(),
            label: e.label.clone(),
            description: e.description.clone(),
            aliases: e.aliases.clone(),
        }
    }
}

impl From<&PredicateRecord> for CatalogDoc {
    fn from(p: &PredicateRecord) -> Self {
        Self {
            id: p.id.clone(),
            label: p.label.clone(),
            description: p.description.clone(),
            aliases: Vec::new(),
        }
    }
}

/// Entity index over the snapshot's entities with at least `min_degree`
/// distinct incident predicates.
pub fn entity_index(
    snapshot: &Snapshot,
    params: Bm25Params,
    min_degree: usize,
) -> Result<Index, RetrievalError> {
    let keep = snapshot.prune_by_degree(min_degree);
    Index::build(
        snapshot.entities().iter().map(CatalogDoc::from),
        CatalogKind::Entity,
        params,
        Some(&keep),
    )
}

pub fn predicate_index(snapshot: &Snapshot, params: Bm25Params) -> Result<Index, RetrievalError> {
    Index::build(
        snapshot.predicates().iter().map(CatalogDoc::from),
        CatalogKind::Predicate,
        params,
        None,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

/// Ranked retrieval output: score descending, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub query: String,
    pub kind: CatalogKind,
    pub hits: Vec<Hit>,
}

impl CandidateSet {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.hits.iter().map(|h| h.id.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_tuned_pairs() {
        let q = preset("qald10").unwrap();
        assert_eq!((q.entity.k1, q.entity.b), (2.95, 0.2));
        assert_eq!((q.predicate.k1, q.predicate.b), (5.18, 0.01));
        let pat = preset("PAT").unwrap();
        assert_eq!((pat.predicate.k1, pat.predicate.b), (0.1, 0.01));
        for p in &PRESETS {
            p.entity.validate().unwrap();
            p.predicate.validate().unwrap();
        }
        assert!(preset("webqsp").is_err());
    }

    #[test]
    fn params_validation() {
        assert!(Bm25Params::new(5.18, 0.01).is_ok());
        assert!(Bm25Params::new(-0.1, 0.5).is_err());
        assert!(Bm25Params::new(1.0, 1.5).is_err());
        assert!(Bm25Params::new(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn doc_text_joins_fields() {
        let d = CatalogDoc {
            id: "Q90".into(),
            label: "Paris".into(),
            description: "capital of France".into(),
            aliases: vec!["City of Light".into()],
        };
        assert_eq!(d.text(), "Paris capital of France City of Light");
    }
}
