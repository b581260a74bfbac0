//! Rejection of unanswerable generations: ontology filtering of the
//! entity/predicate sets before generation, then parse and execution checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kgstore::Snapshot;
use crate::sparql::{parse, AnswerSet, ExecError, Executor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    PreGenerationFilter,
    /// The generator produced no query (backend failure, no query in reply,
    /// too few candidates for the template).
    Generation,
    Parse,
    ExecutionError,
    EmptyResult,
    Accepted,
}

impl Stage {
    pub const REJECTIONS: [Stage; 5] = [
        Stage::PreGenerationFilter,
        Stage::Generation,
        Stage::Parse,
        Stage::ExecutionError,
        Stage::EmptyResult,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::PreGenerationFilter => "pre-generation-filter",
            Stage::Generation => "generation",
            Stage::Parse => "parse",
            Stage::ExecutionError => "execution-error",
            Stage::EmptyResult => "empty-result",
            Stage::Accepted => "accepted",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardVerdict {
    pub accepted: bool,
    pub stage: Stage,
    pub detail: String,
}

impl GuardVerdict {
    pub fn accept() -> Self {
        Self {
            accepted: true,
            stage: Stage::Accepted,
            detail: String::new(),
        }
    }

    pub fn reject(stage: Stage, detail: impl Into<String>) -> Self {
        debug_assert_ne!(stage, Stage::Accepted);
        Self {
            accepted: false,
            stage,
            detail: detail.into(),
        }
    }
}

/// Mismatch unless some entity has an incoming or outgoing relation in
/// `predicates`. Empty inputs leave the initial `true` in place.
pub fn check_entity_mismatch(
    snapshot: &Snapshot,
    entities: &BTreeSet<String>,
    predicates: &BTreeSet<String>,
) -> bool {
    let mut mismatch = true;
    for e in entities {
        if connects(snapshot, e, predicates) {
            mismatch = false;
            break;
        }
    }
    mismatch
}

/// Mismatch if any entity is disconnected from `predicates`.
pub fn strict_check_entity_mismatch(
    snapshot: &Snapshot,
    entities: &BTreeSet<String>,
    predicates: &BTreeSet<String>,
) -> bool {
    entities.is_empty()
        || predicates.is_empty()
        || entities.iter().any(|e| !connects(snapshot, e, predicates))
}

fn connects(snapshot: &Snapshot, entity: &str, predicates: &BTreeSet<String>) -> bool {
    snapshot
        .profile(entity)
        .is_some_and(|p| p.touches_any(predicates))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterPolicy {
    Off,
    #[default]
    Alg1,
    Strict,
}

impl FilterPolicy {
    pub fn mismatch(
        &self,
        snapshot: &Snapshot,
        entities: &BTreeSet<String>,
        predicates: &BTreeSet<String>,
    ) -> Option<bool> {
        match self {
            FilterPolicy::Off => None,
            FilterPolicy::Alg1 => Some(check_entity_mismatch(snapshot, entities, predicates)),
            FilterPolicy::Strict => {
                Some(strict_check_entity_mismatch(snapshot, entities, predicates))
            }
        }
    }
}

impl fmt::Display for FilterPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterPolicy::Off => "off",
            FilterPolicy::Alg1 => "alg1",
            FilterPolicy::Strict => "strict",
        })
    }
}

impl FromStr for FilterPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(Self::Off),
            "alg1" => Ok(Self::Alg1),
            "strict" => Ok(Self::Strict),
            other => Err(format!(
                "unknown filter policy {other:?} (expected off, alg1 or strict)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct GuardPolicy {
    pub filter: FilterPolicy,
    /// Reject on execution errors and empty results.
    pub execution: bool,
}

impl Default for GuardPolicy {
    fn default() -> Self {
        Self {
            filter: FilterPolicy::Alg1,
            execution: true,
        }
    }
}

impl GuardPolicy {
    pub const OFF: GuardPolicy = GuardPolicy {
        filter: FilterPolicy::Off,
        execution: false,
    };
}

pub struct GuardContext<'a> {
    pub entities: &'a BTreeSet<String>,
    pub predicates: &'a BTreeSet<String>,
    pub snapshot: &'a Snapshot,
    pub policy: GuardPolicy,
    pub executor: &'a dyn Executor,
    /// Keep generating and executing after a filter rejection so studies can
    /// see what execution alone would have done. The verdict is unchanged.
    pub diagnose: bool,
}

/// Everything a guarded run observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardRun {
    pub verdict: GuardVerdict,
    /// Filter result under the configured policy; `None` when the filter is off.
    pub mismatch: Option<bool>,
    pub generator_invoked: bool,
    pub query: Option<String>,
    /// What the post-generation stages concluded on their own.
    pub execution_stage: Option<Stage>,
    pub execution_detail: String,
    /// Executed answers, empty when nothing ran.
    pub answers: AnswerSet,
}

impl GuardRun {
    /// Answers as seen by scoring: empty for rejected runs.
    pub fn predicted(&self) -> AnswerSet {
        if self.verdict.accepted {
            self.answers.clone()
        } else {
            AnswerSet::default()
        }
    }
}

fn execution_stages(
    generate: impl FnOnce() -> Result<String, String>,
    executor: &dyn Executor,
    execution_policy: bool,
) -> (Option<String>, Stage, String, AnswerSet) {
    let query = match generate() {
        Ok(q) => q,
        Err(e) => return (None, Stage::Generation, e, AnswerSet::default()),
    };
    if executor.is_local() {
        if let Err(e) = parse(&query) {
            return (
                Some(query),
                Stage::Parse,
                e.to_string(),
                AnswerSet::default(),
            );
        }
    }
    match executor.execute(&query) {
        Err(ExecError::Parse(e)) => (
            Some(query),
            Stage::Parse,
            e.to_string(),
            AnswerSet::default(),
        ),
        Err(e) => (
            Some(query),
            Stage::ExecutionError,
            e.to_string(),
            AnswerSet::default(),
        ),
        Ok(answers) if answers.is_empty() && execution_policy => (
            Some(query),
            Stage::EmptyResult,
            "query returned no answers".into(),
            answers,
        ),
        Ok(answers) => (Some(query), Stage::Accepted, String::new(), answers),
    }
}

/// Runs filter → generation → parse → execution. All failures become
/// verdicts; the generator is not called after a filter rejection unless
/// `diagnose` is set.
pub fn guard_pipeline(
    ctx: &GuardContext<'_>,
    generate: impl FnOnce() -> Result<String, String>,
) -> GuardRun {
    let mismatch = ctx
        .policy
        .filter
        .mismatch(ctx.snapshot, ctx.entities, ctx.predicates);
    let filtered = mismatch == Some(true);
    if filtered && !ctx.diagnose {
        return GuardRun {
            verdict: GuardVerdict::reject(
                Stage::PreGenerationFilter,
                format!(
                    "no entity relates to the predicate set under {}",
                    ctx.policy.filter
                ),
            ),
            mismatch,
            generator_invoked: false,
            query: None,
            execution_stage: None,
            execution_detail: String::new(),
            answers: AnswerSet::default(),
        };
    }
    let (query, stage, detail, answers) =
        execution_stages(generate, ctx.executor, ctx.policy.execution);
    let verdict = if filtered {
        GuardVerdict::reject(
            Stage::PreGenerationFilter,
            format!(
                "no entity relates to the predicate set under {}",
                ctx.policy.filter
            ),
        )
    } else if stage == Stage::Accepted {
        GuardVerdict::accept()
    } else {
        GuardVerdict::reject(stage, detail.clone())
    };
    GuardRun {
        verdict,
        mismatch,
        generator_invoked: true,
        query,
        execution_stage: Some(stage),
        execution_detail: detail,
        answers,
    }
}

/// Per-question facts needed by [`rejection_report`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionObservation {
    pub dataset: String,
    /// The unguarded generation matched the gold answers.
    pub correct: bool,
    pub filter_mismatch: bool,
    /// Generation, parse, execution error or empty result.
    pub execution_rejected: bool,
    /// Direct-answer baseline, when it was run.
    pub llm_rejected: Option<bool>,
    pub llm_correct: Option<bool>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub rejected_incorrect: usize,
    pub incorrect: usize,
    pub rejected_correct: usize,
    pub correct: usize,
}

impl Tally {
    fn add(&mut self, rejected: bool, correct: bool) {
        match (correct, rejected) {
            (true, r) => {
                self.correct += 1;
                self.rejected_correct += r as usize;
            }
            (false, r) => {
                self.incorrect += 1;
                self.rejected_incorrect += r as usize;
            }
        }
    }

    /// Share of incorrect generations caught, in percent.
    pub fn caught(&self) -> Option<f64> {
        percent(self.rejected_incorrect, self.incorrect)
    }

    /// Share of correct generations rejected, in percent.
    pub fn false_rejection(&self) -> Option<f64> {
        percent(self.rejected_correct, self.correct)
    }
}

fn percent(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

pub const NOT_APPLICABLE: &str = "n/a";

pub fn format_percent(v: Option<f64>) -> String {
    v.map_or_else(|| NOT_APPLICABLE.to_string(), |v| format!("{v:.1}"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub dataset: String,
    pub llm_rejection: Tally,
    pub execution: Tally,
    pub filtering_and_execution: Tally,
}

pub const REJECTION_CSV_HEADER: [&str; 9] = [
    "dataset",
    "llm_rejection",
    "execution",
    "filtering_and_execution",
    "false_rejection_llm",
    "false_rejection_execution",
    "false_rejection_filtering_and_execution",
    "n_correct",
    "n_incorrect",
];

/// One row per dataset (sorted by name).
pub fn rejection_report(observations: &[RejectionObservation]) -> Vec<RejectionRow> {
    let mut rows: BTreeMap<&str, RejectionRow> = BTreeMap::new();
    for o in observations {
        let row = rows.entry(&o.dataset).or_insert_with(|| RejectionRow {
            dataset: o.dataset.clone(),
            llm_rejection: Tally::default(),
            execution: Tally::default(),
            filtering_and_execution: Tally::default(),
        });
        if let (Some(rejected), Some(correct)) = (o.llm_rejected, o.llm_correct) {
            row.llm_rejection.add(rejected, correct);
        }
        row.execution.add(o.execution_rejected, o.correct);
        row.filtering_and_execution
            .add(o.filter_mismatch || o.execution_rejected, o.correct);
    }
    rows.into_values().collect()
}

pub fn write_rejection_csv(rows: &[RejectionRow], out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REJECTION_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            format_percent(r.llm_rejection.caught()),
            format_percent(r.execution.caught()),
            format_percent(r.filtering_and_execution.caught()),
            format_percent(r.llm_rejection.false_rejection()),
            format_percent(r.execution.false_rejection()),
            format_percent(r.filtering_and_execution.false_rejection()),
            r.execution.correct.to_string(),
            r.execution.incorrect.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
