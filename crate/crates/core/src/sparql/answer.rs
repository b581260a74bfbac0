use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub const ENTITY_NS: &str = "http://www.wikidata.org/entity/";
pub const PREDICATE_NS: &str = "http://www.wikidata.org/prop/direct/";

/// Maps Wikidata entity and direct-property URIs to their terminal id;
/// everything else passes through. Idempotent.
pub fn normalize_value(value: &str) -> String {
    for ns in [ENTITY_NS, PREDICATE_NS] {
        if let Some(id) = value.strip_prefix(ns) {
            if crate::ids::is_catalog_id(id) {
                return id.to_string();
            }
        }
    }
    value.to_string()
}

/// Normalised result of executing a query.
///
/// Multi-column results are stored as rows joined with `|` (a literal `|` or
/// `\` inside a value is backslash-escaped); `columns` records the width so
/// comparison can fall back to the first projected variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSet {
    pub terms: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<bool>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub columns: usize,
}

impl Default for AnswerSet {
    fn default() -> Self {
        Self {
            terms: BTreeSet::new(),
            truth: None,
            columns: 1,
        }
    }
}

fn one() -> usize {
    1
}

fn is_one(n: &usize) -> bool {
    *n == 1
}

impl AnswerSet {
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            terms: terms
                .into_iter()
                .map(|t| normalize_value(t.as_ref()))
                .collect(),
            truth: None,
            columns: 1,
        }
    }

    pub fn boolean(truth: bool) -> Self {
        Self {
            terms: BTreeSet::new(),
            truth: Some(truth),
            columns: 1,
        }
    }

    /// Builds from rows of equal width; each value is normalised.
    pub fn from_rows<R, S>(rows: impl IntoIterator<Item = R>, columns: usize) -> Self
    where
        R: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let terms = rows
            .into_iter()
            .map(|row| {
                let values: Vec<String> = row
                    .into_iter()
                    .map(|v| normalize_value(v.as_ref()))
                    .collect();
                join_row(&values, columns)
            })
            .collect();
        Self {
            terms,
            truth: None,
            columns: columns.max(1),
        }
    }

    /// No answers: no terms and no boolean. An ASK returning false is not empty.
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty() && self.truth.is_none()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    /// Re-applies value normalisation; a no-op on normalised sets.
    pub fn normalized(&self) -> Self {
        Self {
            terms: self.terms.iter().map(|t| normalize_value(t)).collect(),
            ..self.clone()
        }
    }

    /// The set compared during scoring: booleans become `"true"`/`"false"`,
    /// multi-column rows are reduced to their first column.
    pub fn comparison_terms(&self) -> BTreeSet<String> {
        if let Some(truth) = self.truth {
            return BTreeSet::from([truth.to_string()]);
        }
        if self.columns <= 1 {
            return self.terms.clone();
        }
        self.terms.iter().map(|row| first_field(row)).collect()
    }
}

fn join_row(values: &[String], columns: usize) -> String {
    if columns <= 1 && values.len() <= 1 {
        return values.first().cloned().unwrap_or_default();
    }
    values
        .iter()
        .map(|v| v.replace('\\', "\\\\").replace('|', "\\|"))
        .collect::<Vec<_>>()
        .join("|")
}

fn first_field(row: &str) -> String {
    let mut out = String::new();
    let mut chars = row.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                if let Some(n) = chars.next() {
                    out.push(n);
                }
            }
            '|' => break,
            c => out.push(c),
        }
    }
    out
}
