//! Choosing the right ids among retrieved candidates.
//!
//! The remote backend asks a reasoning model to think step by step over the
//! listed candidates and to put its final ids between `<answer>` and
//! `</answer>`. The two oracle backends are deterministic stand-ins for
//! offline runs.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ChatBackend, ClientError};
use crate::ids::is_catalog_id;
use crate::kgstore::Snapshot;
use crate::retrieval::{CandidateSet, CatalogKind, Index};

pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Error)]
pub enum DisambiguationError {
    #[error("reasoner backend failed: {0}")]
    Backend(#[from] ClientError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no {ANSWER_OPEN}...{ANSWER_CLOSE} block in response")]
pub struct MissingAnswerBlock;

/// Resolves ids to display fields for prompts.
pub trait Catalog {
    fn describe(&self, id: &str) -> Option<(&str, &str)>;
}

impl Catalog for Snapshot {
    fn describe(&self, id: &str) -> Option<(&str, &str)> {
        if let Some(e) = self.entity(id) {
            return Some((&e.label, &e.description));
        }
        self.predicate(id)
            .map(|p| (p.label.as_str(), p.description.as_str()))
    }
}

impl Catalog for Index {
    fn describe(&self, id: &str) -> Option<(&str, &str)> {
        self.doc(id)
            .map(|d| (d.label.as_str(), d.description.as_str()))
    }
}

fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '|' => out.push_str("\\|"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

/// `<id> | <label> | <description>`, with `\`, `|` and line breaks escaped
/// inside fields so every candidate occupies exactly one line.
pub fn render_candidate_line(id: &str, label: &str, description: &str) -> String {
    format!(
        "{} | {} | {}",
        escape_field(id),
        escape_field(label),
        escape_field(description)
    )
}

fn kind_noun(kind: CatalogKind) -> &'static str {
    match kind {
        CatalogKind::Entity => "entities",
        CatalogKind::Predicate => "properties",
    }
}

pub fn build_prompt(
    question: &str,
    candidates: &CandidateSet,
    kind: CatalogKind,
    catalog: &dyn Catalog,
) -> String {
    let noun = kind_noun(kind);
    let mut prompt = format!(
        "You are linking a question to Wikidata {noun}.\n\nQuestion: {question}\n\nCandidate {noun} (id | label | description):\n"
    );
    for id in candidates.ids() {
        let (label, description) = catalog.describe(id).unwrap_or(("", ""));
        prompt.push_str(&render_candidate_line(id, label, description));
        prompt.push('\n');
    }
    prompt.push_str(&format!(
        "\nSelect all ids of the candidate {noun} that the question mentions. \
         Reason step by step, then write the final ids between {ANSWER_OPEN} and {ANSWER_CLOSE}, separated by commas.\n"
    ));
    prompt
}

/// Text between the last `<answer>`…`</answer>` pair.
pub fn answer_block(response: &str) -> Option<&str> {
    let close = response.rfind(ANSWER_CLOSE)?;
    let open = response[..close].rfind(ANSWER_OPEN)?;
    Some(&response[open + ANSWER_OPEN.len()..close])
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub ids: Vec<String>,
    /// Well-formed ids that were not among the offered candidates.
    pub off_list: usize,
}

/// Extracts offered ids from the final answer block, de-duplicated in order
/// of first occurrence.
pub fn parse_selection(
    response: &str,
    offered: &BTreeSet<String>,
) -> Result<Selection, MissingAnswerBlock> {
    let block = answer_block(response).ok_or(MissingAnswerBlock)?;
    let mut selection = Selection::default();
    let mut seen = BTreeSet::new();
    for token in block.split(|c: char| c == ',' || c.is_whitespace()) {
        if !is_catalog_id(token) {
            continue;
        }
        if !offered.contains(token) {
            selection.off_list += 1;
            continue;
        }
        if seen.insert(token) {
            selection.ids.push(token.to_string());
        }
    }
    Ok(selection)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisambiguatorKind {
    Remote,
    OracleLabel,
    OracleGold,
}

impl fmt::Display for DisambiguatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DisambiguatorKind::Remote => "remote",
            DisambiguatorKind::OracleLabel => "oracle-label",
            DisambiguatorKind::OracleGold => "oracle-gold",
        })
    }
}

impl FromStr for DisambiguatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "remote" => Ok(Self::Remote),
            "oracle-label" => Ok(Self::OracleLabel),
            "oracle-gold" => Ok(Self::OracleGold),
            other => Err(format!("unknown disambiguator {other:?}")),
        }
    }
}

/// A configured backend for one call.
#[derive(Clone, Copy)]
pub enum Disambiguator<'a> {
    Remote(&'a dyn ChatBackend),
    OracleLabel,
    /// Test-only: keeps the candidates that are in the gold set.
    OracleGold(&'a BTreeSet<String>),
}

impl Disambiguator<'_> {
    pub fn kind(&self) -> DisambiguatorKind {
        match self {
            Disambiguator::Remote(_) => DisambiguatorKind::Remote,
            Disambiguator::OracleLabel => DisambiguatorKind::OracleLabel,
            Disambiguator::OracleGold(_) => DisambiguatorKind::OracleGold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisambiguationResult {
    pub selected: Vec<String>,
    pub raw_response: String,
    pub backend: DisambiguatorKind,
    pub off_list: usize,
    /// Nothing was selected; the guard treats this as a rejection cause.
    pub rejected: bool,
}

impl DisambiguationResult {
    fn new(
        selected: Vec<String>,
        raw_response: String,
        backend: DisambiguatorKind,
        off_list: usize,
    ) -> Self {
        Self {
            rejected: selected.is_empty(),
            selected,
            raw_response,
            backend,
            off_list,
        }
    }
}

pub fn disambiguate(
    question: &str,
    candidates: &CandidateSet,
    kind: CatalogKind,
    catalog: &dyn Catalog,
    backend: Disambiguator<'_>,
) -> Result<DisambiguationResult, DisambiguationError> {
    let backend_kind = backend.kind();
    if candidates.is_empty() {
        return Ok(DisambiguationResult::new(
            vec![],
            String::new(),
            backend_kind,
            0,
        ));
    }
    match backend {
        Disambiguator::OracleLabel => {
            let q = question.to_lowercase();
            let selected = candidates
                .ids()
                .filter(|id| {
                    catalog
                        .describe(id)
                        .map(|(label, _)| label.trim().to_lowercase())
                        .is_some_and(|label| !label.is_empty() && q.contains(&label))
                })
                .map(String::from)
                .collect();
            Ok(DisambiguationResult::new(
                selected,
                String::new(),
                backend_kind,
                0,
            ))
        }
        Disambiguator::OracleGold(gold) => {
            let selected = candidates
                .ids()
                .filter(|id| gold.contains(*id))
                .map(String::from)
                .collect();
            Ok(DisambiguationResult::new(
                selected,
                String::new(),
                backend_kind,
                0,
            ))
        }
        Disambiguator::Remote(chat) => {
            let prompt = build_prompt(question, candidates, kind, catalog);
            let offered: BTreeSet<String> = candidates.ids().map(String::from).collect();
            let mut last = String::new();
            for attempt in 0..=chat.max_retries() {
                let response = chat.complete(&prompt)?;
                match parse_selection(&response, &offered) {
                    Ok(sel) => {
                        return Ok(DisambiguationResult::new(
                            sel.ids,
                            response,
                            backend_kind,
                            sel.off_list,
                        ));
                    }
                    Err(MissingAnswerBlock) => {
                        log::debug!("reply without answer block (attempt {})", attempt + 1);
                        last = response;
                    }
                }
            }
            Ok(DisambiguationResult::new(vec![], last, backend_kind, 0))
        }
    }
}
