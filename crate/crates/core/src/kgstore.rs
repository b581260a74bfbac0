//! Immutable knowledge-graph snapshot: entity and predicate catalogs, the
//! triple set, and per-entity incoming/outgoing relation profiles.
//!
//! Snapshots are loaded from three files:
//!
//! - entities: JSON Lines, `{"id": "Q42", "label": ..., "description": ..., "aliases": [...]}`
//! - predicates: JSON Lines, `{"id": "P31", "label": ..., "description": ...}`
//! - triples: TSV, `subject<TAB>predicate<TAB>object`; an object that looks like
//!   an entity id (`Q` followed by digits) is an entity reference, anything else
//!   is a literal kept verbatim.
//!
//! Entity degrees are always recomputed from the triples; a `degree` key in the
//! entity file is ignored.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{is_entity_id, is_predicate_id};

/// Number of offending references listed in an [`LoadError::UnknownReferences`].
const MAX_REPORTED_OFFENDERS: usize = 10;

/// Pruning threshold used by the entity index: entities with fewer distinct
/// predicates than this are dropped.
pub const DEFAULT_MIN_DEGREE: usize = 10;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: malformed record: {message}")]
    Malformed {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}:{line}: invalid identifier {id:?}")]
    InvalidId {
        file: String,
        line: usize,
        id: String,
    },
    #[error("{file}:{line}: duplicate identifier {id}")]
    DuplicateId {
        file: String,
        line: usize,
        id: String,
    },
    #[error("{file}: {total} unresolved reference(s), first: {}", format_offenders(.offenders))]
    UnknownReferences {
        file: String,
        offenders: Vec<(usize, String)>,
        total: usize,
    },
}

fn format_offenders(offenders: &[(usize, String)]) -> String {
    offenders
        .iter()
        .map(|(line, id)| format!("{id} (line {line})"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown entity {0}")]
pub struct UnknownEntity(pub String);

/// An entity catalog entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    /// Distinct predicates incident to the entity, in either direction.
    #[serde(skip_deserializing, default)]
    pub degree: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateRecord {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub description: String,
}

/// Object position of a triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum Term {
    Entity(String),
    Literal(String),
}

impl Term {
    /// Classifies a raw object column value.
    pub fn from_raw(raw: &str) -> Term {
        if is_entity_id(raw) {
            Term::Entity(raw.to_string())
        } else {
            Term::Literal(raw.to_string())
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Term::Entity(s) | Term::Literal(s) => s,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: impl Into<String>, predicate: impl Into<String>, object: Term) -> Self {
        Self {
            subject: subject.into(),
            predicate: predicate.into(),
            object,
        }
    }
}

/// Incoming and outgoing predicate sets of one entity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRelationProfile {
    pub entity: String,
    pub incoming: BTreeSet<String>,
    pub outgoing: BTreeSet<String>,
}

impl EntityRelationProfile {
    fn empty(entity: &str) -> Self {
        Self {
            entity: entity.to_string(),
            ..Default::default()
        }
    }

    /// `incoming ∪ outgoing`.
    pub fn all(&self) -> BTreeSet<&str> {
        self.incoming
            .iter()
            .chain(self.outgoing.iter())
            .map(String::as_str)
            .collect()
    }

    pub fn touches_any(&self, predicates: &BTreeSet<String>) -> bool {
        predicates
            .iter()
            .any(|p| self.incoming.contains(p) || self.outgoing.contains(p))
    }
}

/// A loaded knowledge graph. There is no mutation API; share it behind an
/// `Arc` for concurrent readers.
#[derive(Debug, Clone)]
pub struct Snapshot {
    entities: Vec<EntityRecord>,
    entity_pos: HashMap<String, usize>,
    predicates: Vec<PredicateRecord>,
    predicate_pos: HashMap<String, usize>,
    triples: Vec<Triple>,
    profiles: HashMap<String, EntityRelationProfile>,
    by_subject: HashMap<String, Vec<usize>>,
    by_predicate: HashMap<String, Vec<usize>>,
    by_object: HashMap<Term, Vec<usize>>,
}

impl Snapshot {
    /// Builds a snapshot from in-memory parts, checking identifiers and
    /// referential integrity. Duplicate triples are collapsed.
    pub fn from_parts(
        entities: Vec<EntityRecord>,
        predicates: Vec<PredicateRecord>,
        triples: Vec<Triple>,
    ) -> Result<Self, LoadError> {
        let numbered = |n: usize| (1..=n).collect::<Vec<_>>();
        let (el, pl, tl) = (
            numbered(entities.len()),
            numbered(predicates.len()),
            numbered(triples.len()),
        );
        Self::assemble(
            ("<entities>", entities, el),
            ("<predicates>", predicates, pl),
            ("<triples>", triples, tl),
        )
    }

    fn assemble(
        (efile, entities, elines): (&str, Vec<EntityRecord>, Vec<usize>),
        (pfile, predicates, plines): (&str, Vec<PredicateRecord>, Vec<usize>),
        (tfile, triples, tlines): (&str, Vec<Triple>, Vec<usize>),
    ) -> Result<Self, LoadError> {
        let mut entity_pos = HashMap::with_capacity(entities.len());
        for (i, (e, line)) in entities.iter().zip(elines).enumerate() {
            if !is_entity_id(&e.id) {
                return Err(LoadError::InvalidId {
                    file: efile.into(),
                    line,
                    id: e.id.clone(),
                });
            }
            if entity_pos.insert(e.id.clone(), i).is_some() {
                return Err(LoadError::DuplicateId {
                    file: efile.into(),
                    line,
                    id: e.id.clone(),
                });
            }
        }

        let mut predicate_pos = HashMap::with_capacity(predicates.len());
        for (i, (p, line)) in predicates.iter().zip(plines).enumerate() {
            if !is_predicate_id(&p.id) {
                return Err(LoadError::InvalidId {
                    file: pfile.into(),
                    line,
                    id: p.id.clone(),
                });
            }
            if p.label.trim().is_empty() {
                return Err(LoadError::Malformed {
                    file: pfile.into(),
                    line,
                    message: format!("predicate {} has an empty label", p.id),
                });
            }
            if predicate_pos.insert(p.id.clone(), i).is_some() {
                return Err(LoadError::DuplicateId {
                    file: pfile.into(),
                    line,
                    id: p.id.clone(),
                });
            }
        }

        let mut offenders = Vec::new();
        let mut total = 0;
        for (t, &line) in triples.iter().zip(&tlines) {
            let mut unresolved = Vec::new();
            if !entity_pos.contains_key(&t.subject) {
                unresolved.push(t.subject.clone());
            }
            if !predicate_pos.contains_key(&t.predicate) {
                unresolved.push(t.predicate.clone());
            }
            if let Term::Entity(o) = &t.object {
                if !entity_pos.contains_key(o) {
                    unresolved.push(o.clone());
                }
            }
            for id in unresolved {
                total += 1;
                if offenders.len() < MAX_REPORTED_OFFENDERS {
                    offenders.push((line, id));
                }
            }
        }
        if total > 0 {
            return Err(LoadError::UnknownReferences {
                file: tfile.into(),
                offenders,
                total,
            });
        }

        let mut seen = HashSet::with_capacity(triples.len());
        let triples: Vec<Triple> = triples
            .into_iter()
            .filter(|t| seen.insert(t.clone()))
            .collect();

        let mut snapshot = Snapshot {
            entities,
            entity_pos,
            predicates,
            predicate_pos,
            triples,
            profiles: HashMap::new(),
            by_subject: HashMap::new(),
            by_predicate: HashMap::new(),
            by_object: HashMap::new(),
        };
        snapshot.build_indexes();
        Ok(snapshot)
    }

    fn build_indexes(&mut self) {
        for (i, t) in self.triples.iter().enumerate() {
            self.by_subject
                .entry(t.subject.clone())
                .or_default()
                .push(i);
            self.by_predicate
                .entry(t.predicate.clone())
                .or_default()
                .push(i);
            self.by_object.entry(t.object.clone()).or_default().push(i);

            // Same branch order as a per-entity scan: a self-loop counts as incoming only.
            if let Term::Entity(o) = &t.object {
                self.profiles
                    .entry(o.clone())
                    .or_insert_with(|| EntityRelationProfile::empty(o))
                    .incoming
                    .insert(t.predicate.clone());
            }
            if !matches!(&t.object, Term::Entity(o) if *o == t.subject) {
                self.profiles
                    .entry(t.subject.clone())
                    .or_insert_with(|| EntityRelationProfile::empty(&t.subject))
                    .outgoing
                    .insert(t.predicate.clone());
            }
        }
        for e in &mut self.entities {
            e.degree = self.profiles.get(&e.id).map_or(0, |p| p.all().len());
        }
    }

    /// Reads a snapshot from the three catalog files.
    pub fn load(
        entity_file: &Path,
        predicate_file: &Path,
        triple_file: &Path,
    ) -> Result<Self, LoadError> {
        let open = |path: &Path| {
            File::open(path)
                .map(BufReader::new)
                .map_err(|source| LoadError::Io {
                    path: path.to_path_buf(),
                    source,
                })
        };
        Self::from_readers(
            (&entity_file.display().to_string(), open(entity_file)?),
            (&predicate_file.display().to_string(), open(predicate_file)?),
            (&triple_file.display().to_string(), open(triple_file)?),
        )
    }

    /// Like [`Snapshot::load`] but over arbitrary readers; each reader is
    /// paired with a name used in error messages.
    pub fn from_readers(
        entities: (&str, impl BufRead),
        predicates: (&str, impl BufRead),
        triples: (&str, impl BufRead),
    ) -> Result<Self, LoadError> {
        let (ents, elines) = read_json_lines::<EntityRecord>(entities.0, entities.1)?;
        let (preds, plines) = read_json_lines::<PredicateRecord>(predicates.0, predicates.1)?;
        let (trips, tlines) = read_triples(triples.0, triples.1)?;
        Self::assemble(
            (entities.0, ents, elines),
            (predicates.0, preds, plines),
            (triples.0, trips, tlines),
        )
    }

    pub fn entities(&self) -> &[EntityRecord] {
        &self.entities
    }

    pub fn predicates(&self) -> &[PredicateRecord] {
        &self.predicates
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity(&self, id: &str) -> Option<&EntityRecord> {
        self.entity_pos.get(id).map(|&i| &self.entities[i])
    }

    pub fn predicate(&self, id: &str) -> Option<&PredicateRecord> {
        self.predicate_pos.get(id).map(|&i| &self.predicates[i])
    }

    pub fn contains_triple(&self, t: &Triple) -> bool {
        self.by_subject
            .get(&t.subject)
            .is_some_and(|idx| idx.iter().any(|&i| &self.triples[i] == t))
    }

    /// Positions of triples with the given subject.
    pub fn with_subject(&self, subject: &str) -> &[usize] {
        self.by_subject.get(subject).map_or(&[], Vec::as_slice)
    }

    pub fn with_predicate(&self, predicate: &str) -> &[usize] {
        self.by_predicate.get(predicate).map_or(&[], Vec::as_slice)
    }

    pub fn with_object(&self, object: &Term) -> &[usize] {
        self.by_object.get(object).map_or(&[], Vec::as_slice)
    }

    /// Incoming and outgoing predicates of `entity`.
    pub fn get_entity_relations(
        &self,
        entity: &str,
    ) -> Result<EntityRelationProfile, UnknownEntity> {
        if !self.entity_pos.contains_key(entity) {
            return Err(UnknownEntity(entity.to_string()));
        }
        Ok(self.relations_or_empty(entity))
    }

    /// Profile of `entity`, empty when the id is not in the catalog.
    pub fn relations_or_empty(&self, entity: &str) -> EntityRelationProfile {
        self.profiles
            .get(entity)
            .cloned()
            .unwrap_or_else(|| EntityRelationProfile::empty(entity))
    }

    pub(crate) fn profile(&self, entity: &str) -> Option<&EntityRelationProfile> {
        self.profiles.get(entity)
    }

    /// Ids of entities with at least `min_degree` distinct incident predicates.
    pub fn prune_by_degree(&self, min_degree: usize) -> BTreeSet<String> {
        self.entities
            .iter()
            .filter(|e| e.degree >= min_degree)
            .map(|e| e.id.clone())
            .collect()
    }
}

fn read_json_lines<T: serde::de::DeserializeOwned>(
    file: &str,
    reader: impl BufRead,
) -> Result<(Vec<T>, Vec<usize>), LoadError> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| LoadError::Malformed {
            file: file.into(),
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| LoadError::Malformed {
            file: file.into(),
            line: lineno,
            message: e.to_string(),
        })?;
        records.push(record);
        lines.push(lineno);
    }
    Ok((records, lines))
}

fn read_triples(file: &str, reader: impl BufRead) -> Result<(Vec<Triple>, Vec<usize>), LoadError> {
    let mut triples = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| LoadError::Malformed {
            file: file.into(),
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.splitn(3, '\t').collect();
        let [s, p, o] = cols[..] else {
            return Err(LoadError::Malformed {
                file: file.into(),
                line: lineno,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        };
        if !is_entity_id(s) {
            return Err(LoadError::InvalidId {
                file: file.into(),
                line: lineno,
                id: s.to_string(),
            });
        }
        if !is_predicate_id(p) {
            return Err(LoadError::InvalidId {
                file: file.into(),
                line: lineno,
                id: p.to_string(),
            });
        }
        triples.push(Triple::new(s, p, Term::from_raw(o)));
        lines.push(lineno);
    }
    Ok((triples, lines))
}
