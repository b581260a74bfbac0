use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{exact_match_score, macro_average, score, MetricRecord, QaExample};
use crate::client::ChatBackend;
use crate::disambiguation::{disambiguate, Disambiguator, DisambiguatorKind};
use crate::generation::{
    direct_answer, generate, FewShotExample, GenerationRequest, Generator, GeneratorKind,
    DEFAULT_REFUSAL_PHRASES,
};
use crate::guard::{
    guard_pipeline, GuardContext, GuardPolicy, GuardVerdict, RejectionObservation, Stage,
};
use crate::kgstore::Snapshot;
use crate::retrieval::{CatalogKind, Index};
use crate::sparql::{AnswerSet, Executor};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("the {0} backend needs a configured reasoner client")]
    MissingClient(&'static str),
    #[error("cannot start worker pool: {0}")]
    WorkerPool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub entity_top_k: usize,
    pub predicate_top_k: usize,
    pub disambiguator: DisambiguatorKind,
    pub generator: GeneratorKind,
    pub policy: GuardPolicy,
    pub workers: usize,
    /// Generate and execute even after a filter rejection (rejection study).
    pub diagnose: bool,
    /// Also run the direct-answer baseline; needs a reasoner client.
    pub direct_answer: bool,
    pub refusal_phrases: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            entity_top_k: 100,
            predicate_top_k: 100,
            disambiguator: DisambiguatorKind::Remote,
            generator: GeneratorKind::RemoteLlm,
            policy: GuardPolicy::default(),
            workers: 4,
            diagnose: false,
            direct_answer: false,
            refusal_phrases: DEFAULT_REFUSAL_PHRASES
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

pub struct PipelineResources<'a> {
    pub snapshot: &'a Snapshot,
    pub entity_index: &'a Index,
    pub predicate_index: &'a Index,
    pub executor: &'a dyn Executor,
    pub chat: Option<&'a dyn ChatBackend>,
    pub fewshot: &'a [FewShotExample],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectAnswerOutcome {
    pub answers: Vec<String>,
    pub llm_rejected: bool,
    /// Exact match against the gold answer set; `None` on transport failure.
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Trace record for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub id: String,
    pub dataset: String,
    pub question: String,
    pub entity_candidates: Vec<String>,
    pub predicate_candidates: Vec<String>,
    pub selected_entities: Vec<String>,
    pub selected_predicates: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
    pub mismatch: Option<bool>,
    pub query: Option<String>,
    pub verdict: GuardVerdict,
    pub execution_stage: Option<Stage>,
    pub raw_answers: AnswerSet,
    pub predicted: AnswerSet,
    pub gold: AnswerSet,
    pub metrics: MetricRecord,
    /// The unguarded generation matched the gold answers.
    pub raw_correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_answer: Option<DirectAnswerOutcome>,
}

impl PipelineOutcome {
    pub fn rejection_observation(&self) -> RejectionObservation {
        let execution_rejected = match self.execution_stage {
            Some(Stage::Accepted) => self.raw_answers.is_empty(),
            Some(_) => true,
            None => false,
        };
        RejectionObservation {
            dataset: self.dataset.clone(),
            correct: self.raw_correct,
            filter_mismatch: self.mismatch == Some(true),
            execution_rejected,
            llm_rejected: self
                .direct_answer
                .as_ref()
                .filter(|d| d.correct.is_some())
                .map(|d| d.llm_rejected),
            llm_correct: self.direct_answer.as_ref().and_then(|d| d.correct),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset: String,
    pub n: usize,
    pub f1: f64,
    pub acc_at_1: f64,
    pub rejected_pct: f64,
    pub stages: BTreeMap<Stage, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub summaries: Vec<DatasetSummary>,
    pub outcomes: Vec<PipelineOutcome>,
}

fn gold_answers(ex: &QaExample, executor: &dyn Executor) -> Result<AnswerSet, String> {
    match &ex.gold_answers {
        Some(a) => Ok(a.clone()),
        None => executor
            .execute(&ex.gold_query)
            .map_err(|e| format!("gold query failed: {e}")),
    }
}

fn select(
    ex: &QaExample,
    kind: CatalogKind,
    index: &Index,
    top_k: usize,
    backend: Disambiguator<'_>,
    errors: &mut Vec<String>,
) -> (Vec<String>, Vec<String>) {
    let candidates = index.search(&ex.question, top_k);
    let ids = candidates.ids().map(String::from).collect();
    match disambiguate(&ex.question, &candidates, kind, index, backend) {
        Ok(r) => (ids, r.selected),
        Err(e) => {
            errors.push(format!("{kind:?} disambiguation: {e}"));
            (ids, Vec::new())
        }
    }
}

fn run_one(ex: &QaExample, cfg: &PipelineConfig, res: &PipelineResources<'_>) -> PipelineOutcome {
    let mut errors = Vec::new();
    let gold = gold_answers(ex, res.executor).unwrap_or_else(|e| {
        errors.push(e);
        AnswerSet::default()
    });

    let disambiguator = |gold_ids| match cfg.disambiguator {
        DisambiguatorKind::Remote => {
            Disambiguator::Remote(res.chat.expect("checked before the run"))
        }
        DisambiguatorKind::OracleLabel => Disambiguator::OracleLabel,
        DisambiguatorKind::OracleGold => Disambiguator::OracleGold(gold_ids),
    };
    let (entity_candidates, selected_entities) = select(
        ex,
        CatalogKind::Entity,
        res.entity_index,
        cfg.entity_top_k,
        disambiguator(&ex.gold_entities),
        &mut errors,
    );
    let (predicate_candidates, selected_predicates) = select(
        ex,
        CatalogKind::Predicate,
        res.predicate_index,
        cfg.predicate_top_k,
        disambiguator(&ex.gold_predicates),
        &mut errors,
    );

    let entity_set: BTreeSet<String> = selected_entities.iter().cloned().collect();
    let predicate_set: BTreeSet<String> = selected_predicates.iter().cloned().collect();
    let ctx = GuardContext {
        entities: &entity_set,
        predicates: &predicate_set,
        snapshot: res.snapshot,
        policy: cfg.policy,
        executor: res.executor,
        diagnose: cfg.diagnose,
    };
    let run = guard_pipeline(&ctx, || {
        let mut req = GenerationRequest::from_ids(
            &ex.question,
            &selected_entities,
            &selected_predicates,
            res.snapshot,
        );
        req.fewshot_examples = res.fewshot.to_vec();
        let generator = match cfg.generator {
            GeneratorKind::RemoteLlm => {
                Generator::RemoteLlm(res.chat.expect("checked before the run"))
            }
            GeneratorKind::Template => Generator::Template,
            GeneratorKind::GoldPassthrough => Generator::GoldPassthrough(Some(&ex.gold_query)),
        };
        generate(&req, generator)
            .map(|g| g.query_text)
            .map_err(|e| e.to_string())
    });

    let predicted = run.predicted();
    let metrics = score(&gold, &predicted);
    let raw_correct = run.execution_stage.is_some() && score(&gold, &run.answers).acc_at_1 == 1.0;

    let direct = cfg.direct_answer.then(|| {
        let chat = res.chat.expect("checked before the run");
        match direct_answer(&ex.question, chat, &cfg.refusal_phrases) {
            Ok(d) => {
                let gold_labels: Vec<String> = match &ex.answer_labels {
                    Some(labels) => labels.clone(),
                    None => gold.comparison_terms().into_iter().collect(),
                };
                DirectAnswerOutcome {
                    correct: Some(
                        !d.llm_rejected && exact_match_score(&gold_labels, &d.answers) == 1,
                    ),
                    answers: d.answers,
                    llm_rejected: d.llm_rejected,
                    error: None,
                }
            }
            Err(e) => DirectAnswerOutcome {
                answers: Vec::new(),
                llm_rejected: false,
                correct: None,
                error: Some(e.to_string()),
            },
        }
    });

    PipelineOutcome {
        id: ex.id.clone(),
        dataset: ex.dataset.clone(),
        question: ex.question.clone(),
        entity_candidates,
        predicate_candidates,
        selected_entities,
        selected_predicates,
        errors,
        mismatch: run.mismatch,
        query: run.query.clone(),
        verdict: run.verdict.clone(),
        execution_stage: run.execution_stage,
        raw_answers: run.answers,
        predicted,
        gold,
        metrics,
        raw_correct,
        direct_answer: direct,
    }
}

/// Runs every example through the full pipeline. Outcomes keep input order
/// regardless of the worker count.
pub fn evaluate_end_to_end(
    examples: &[QaExample],
    cfg: &PipelineConfig,
    res: &PipelineResources<'_>,
) -> Result<EvaluationReport, PipelineError> {
    let needs_chat = cfg.disambiguator == DisambiguatorKind::Remote
        || cfg.generator == GeneratorKind::RemoteLlm
        || cfg.direct_answer;
    if needs_chat && res.chat.is_none() {
        let which = if cfg.disambiguator == DisambiguatorKind::Remote {
            "remote disambiguation"
        } else if cfg.generator == GeneratorKind::RemoteLlm {
            "remote-llm generation"
        } else {
            "direct-answer"
        };
        return Err(PipelineError::MissingClient(which));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| PipelineError::WorkerPool(e.to_string()))?;
    let outcomes: Vec<PipelineOutcome> = pool.install(|| {
        examples
            .par_iter()
            .map(|ex| run_one(ex, cfg, res))
            .collect()
    });
    Ok(EvaluationReport {
        summaries: summarize(&outcomes),
        outcomes,
    })
}

fn summary(dataset: &str, outcomes: &[&PipelineOutcome]) -> DatasetSummary {
    let mut stages: BTreeMap<Stage, usize> = Stage::REJECTIONS.iter().map(|s| (*s, 0)).collect();
    for o in outcomes {
        if !o.verdict.accepted {
            *stages.entry(o.verdict.stage).or_default() += 1;
        }
    }
    let rejected: usize = stages.values().sum();
    let n = outcomes.len();
    DatasetSummary {
        dataset: dataset.to_string(),
        n,
        f1: macro_average(outcomes.iter().map(|o| o.metrics.f1)),
        acc_at_1: macro_average(outcomes.iter().map(|o| o.metrics.acc_at_1)),
        rejected_pct: if n == 0 {
            0.0
        } else {
            100.0 * rejected as f64 / n as f64
        },
        stages,
    }
}

/// Per-dataset rows sorted by name, followed by an `all` row when more than
/// one dataset is present.
pub fn summarize(outcomes: &[PipelineOutcome]) -> Vec<DatasetSummary> {
    let mut groups: BTreeMap<&str, Vec<&PipelineOutcome>> = BTreeMap::new();
    for o in outcomes {
        groups.entry(&o.dataset).or_default().push(o);
    }
    let mut rows: Vec<DatasetSummary> = groups.iter().map(|(name, os)| summary(name, os)).collect();
    if groups.len() > 1 {
        let all: Vec<&PipelineOutcome> = outcomes.iter().collect();
        rows.push(summary("all", &all));
    }
    rows
}

pub const REPORT_CSV_HEADER: [&str; 10] = [
    "dataset",
    "n",
    "f1",
    "acc_at_1",
    "rejected_pct",
    "pre_generation_filter",
    "generation",
    "parse",
    "execution_error",
    "empty_result",
];

pub fn write_report_csv(summaries: &[DatasetSummary], out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_CSV_HEADER)?;
    for s in summaries {
        let mut record = vec![
            s.dataset.clone(),
            s.n.to_string(),
            format!("{:.6}", s.f1),
            format!("{:.6}", s.acc_at_1),
            format!("{:.2}", s.rejected_pct),
        ];
        record.extend(
            Stage::REJECTIONS
                .iter()
                .map(|st| s.stages.get(st).copied().unwrap_or(0).to_string()),
        );
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON object per outcome, in outcome order.
pub fn write_trace(outcomes: &[PipelineOutcome], mut out: impl Write) -> io::Result<()> {
    for o in outcomes {
        serde_json::to_writer(&mut out, o)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
