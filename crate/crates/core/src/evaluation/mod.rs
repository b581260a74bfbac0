//! Datasets, execution-match metrics, end-to-end runs and split tooling.

mod pipeline;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{is_entity_id, is_predicate_id};
use crate::sparql::{parse, AnswerSet};

pub use pipeline::{
    evaluate_end_to_end, summarize, write_report_csv, write_trace, DatasetSummary,
    DirectAnswerOutcome, EvaluationReport, PipelineConfig, PipelineError, PipelineOutcome,
    PipelineResources, REPORT_CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: no valid examples ({} line error(s), first: {})", errors.len(), errors.first().map_or("-".to_string(), |e| e.to_string()))]
    NoValidExamples {
        path: String,
        errors: Vec<LineError>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    pub id: String,
    pub question: String,
    pub gold_query: String,
    pub gold_entities: BTreeSet<String>,
    pub gold_predicates: BTreeSet<String>,
    /// Cached result of the gold query; executed on demand when absent.
    pub gold_answers: Option<AnswerSet>,
    /// Human-readable answers for the direct-answer baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_labels: Option<Vec<String>>,
    pub dataset: String,
    pub split: Split,
}

/// On-disk dataset line.
#[derive(Debug, Deserialize)]
struct RawExample {
    id: serde_json::Value,
    question: String,
    sparql: String,
    entities: Vec<String>,
    split: Split,
    #[serde(default)]
    predicates: Option<Vec<String>>,
    #[serde(default)]
    dataset: Option<String>,
    #[serde(default)]
    answers: Option<Vec<String>>,
    #[serde(default)]
    answer_labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedDataset {
    pub examples: Vec<QaExample>,
    pub errors: Vec<LineError>,
}

impl LoadedDataset {
    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut counts = BTreeMap::new();
        for ex in &self.examples {
            *counts.entry(ex.split).or_insert(0) += 1;
        }
        counts
    }
}

fn validate(raw: RawExample, default_dataset: &str) -> Result<QaExample, String> {
    let id = match raw.id {
        serde_json::Value::String(s) if !s.trim().is_empty() => s,
        serde_json::Value::Number(n) => n.to_string(),
        other => return Err(format!("invalid id {other}")),
    };
    if raw.question.trim().is_empty() {
        return Err("empty question".into());
    }
    if raw.sparql.trim().is_empty() {
        return Err("empty sparql".into());
    }
    if let Some(bad) = raw.entities.iter().find(|e| !is_entity_id(e)) {
        return Err(format!("invalid entity id {bad:?}"));
    }
    let gold_predicates = match raw.predicates {
        Some(preds) => {
            if let Some(bad) = preds.iter().find(|p| !is_predicate_id(p)) {
                return Err(format!("invalid predicate id {bad:?}"));
            }
            preds.into_iter().collect()
        }
        // Recovered from the gold query when the source does not list them.
        None => parse(&raw.sparql)
            .map(|ast| ast.predicates().into_iter().map(String::from).collect())
            .unwrap_or_default(),
    };
    Ok(QaExample {
        id,
        question: raw.question,
        gold_query: raw.sparql,
        gold_entities: raw.entities.into_iter().collect(),
        gold_predicates,
        gold_answers: raw.answers.map(AnswerSet::from_terms),
        answer_labels: raw.answer_labels,
        dataset: raw.dataset.unwrap_or_else(|| default_dataset.to_string()),
        split: raw.split,
    })
}

/// Reads dataset JSON Lines. Bad lines are collected rather than fatal; a
/// file with no valid line is an error.
pub fn load_dataset_from_reader(
    name: &str,
    default_dataset: &str,
    reader: impl BufRead,
) -> Result<LoadedDataset, DatasetError> {
    let mut examples = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: name.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<RawExample>(&line)
            .map_err(|e| e.to_string())
            .and_then(|raw| validate(raw, default_dataset));
        match parsed {
            Ok(ex) => examples.push(ex),
            Err(message) => errors.push(LineError {
                line: i + 1,
                message,
            }),
        }
    }
    if examples.is_empty() {
        return Err(DatasetError::NoValidExamples {
            path: name.to_string(),
            errors,
        });
    }
    Ok(LoadedDataset { examples, errors })
}

/// Loads a file; examples without a `dataset` key are named after the file stem.
pub fn load_dataset(path: &Path) -> Result<LoadedDataset, DatasetError> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: name.clone(),
        source,
    })?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    load_dataset_from_reader(&name, stem, BufReader::new(file))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub acc_at_1: f64,
}

impl MetricRecord {
    const ONES: MetricRecord = MetricRecord {
        precision: 1.0,
        recall: 1.0,
        f1: 1.0,
        acc_at_1: 1.0,
    };
    const ZEROS: MetricRecord = MetricRecord {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        acc_at_1: 0.0,
    };
}

/// Execution-match metrics of `predicted` against `gold`.
///
/// Both empty scores 1 everywhere; exactly one empty scores 0. Otherwise
/// `C = T ∩ T̂`, `p = |C|/|T̂|`, `r = |C|/|T|`, and Acc@1 is 1 when `C = T`.
pub fn score_sets(gold: &BTreeSet<String>, predicted: &BTreeSet<String>) -> MetricRecord {
    match (gold.is_empty(), predicted.is_empty()) {
        (true, true) => return MetricRecord::ONES,
        (true, false) | (false, true) => return MetricRecord::ZEROS,
        _ => {}
    }
    let common = gold.intersection(predicted).count() as f64;
    let precision = common / predicted.len() as f64;
    let recall = common / gold.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    MetricRecord {
        precision,
        recall,
        f1,
        acc_at_1: if common as usize == gold.len() {
            1.0
        } else {
            0.0
        },
    }
}

pub fn score(gold: &AnswerSet, predicted: &AnswerSet) -> MetricRecord {
    score_sets(&gold.comparison_terms(), &predicted.comparison_terms())
}

/// 1 when the trimmed, case-folded label sets are equal.
pub fn exact_match_score<A: AsRef<str>, B: AsRef<str>>(gold: &[A], predicted: &[B]) -> u8 {
    fn norm<S: AsRef<str>>(xs: &[S]) -> BTreeSet<String> {
        xs.iter()
            .map(|s| s.as_ref().trim().to_lowercase())
            .collect()
    }
    u8::from(norm(gold) == norm(predicted))
}

/// Arithmetic mean of `values`; 0 for an empty slice.
pub fn macro_average(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("held-out dataset {held_out:?} is not among the inputs ({})", available.join(", "))]
pub struct UnknownDataset {
    pub held_out: String,
    pub available: Vec<String>,
}

/// Train on the train splits of every other dataset, test on the held-out
/// dataset's test split. Both sides are ordered by dataset name, then id.
pub fn make_generalization_splits(
    datasets: &BTreeMap<String, Vec<QaExample>>,
    held_out: &str,
) -> Result<(Vec<QaExample>, Vec<QaExample>), UnknownDataset> {
    let Some(test_source) = datasets.get(held_out) else {
        return Err(UnknownDataset {
            held_out: held_out.to_string(),
            available: datasets.keys().cloned().collect(),
        });
    };
    let by_id = |a: &QaExample, b: &QaExample| a.id.cmp(&b.id);
    let mut train = Vec::new();
    for (name, examples) in datasets {
        if name == held_out {
            continue;
        }
        let mut part: Vec<QaExample> = examples
            .iter()
            .filter(|e| e.split == Split::Train)
            .cloned()
            .collect();
        part.sort_by(by_id);
        train.extend(part);
    }
    let mut test: Vec<QaExample> = test_source
        .iter()
        .filter(|e| e.split == Split::Test)
        .cloned()
        .collect();
    test.sort_by(by_id);
    Ok((train, test))
}
