//! Query generation backends, the direct-answer baseline, and preparation of
//! distractor-augmented training files.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ChatBackend, ClientError};
use crate::disambiguation::{answer_block, render_candidate_line, Catalog};
use crate::evaluation::QaExample;
use crate::retrieval::Index;

pub const DEFAULT_N_DISTRACTORS: usize = 5;

/// Openers that mark a reply as prose rather than a query.
pub const PROSE_STOPLIST: &[&str] = &["Sure", "Here", "Certainly", "The query", "This query"];

pub const DEFAULT_REFUSAL_PHRASES: &[&str] = &[
    "I cannot answer",
    "I can't answer",
    "I don't know",
    "I do not know",
    "I'm unable to answer",
    "I am unable to answer",
];

const INSTRUCTION: &str = "Write a SPARQL query over Wikidata that answers the question. \
Use only the entities and predicates listed below, written as wd:<id> and wdt:<id>. \
Reply with the query only.";

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("generator backend failed: {0}")]
    Backend(#[from] ClientError),
    #[error(
        "insufficient candidates: template generation needs at least one entity and one predicate"
    )]
    InsufficientCandidates,
    #[error("response contains no query")]
    NoQuery { raw_response: String },
    #[error("no gold query supplied for passthrough generation")]
    MissingGold,
}

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("cannot serialise training pair: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum FewShotError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("few-shot line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub label: String,
    pub description: String,
}

impl Candidate {
    pub fn lookup(id: &str, catalog: &dyn Catalog) -> Self {
        let (label, description) = catalog.describe(id).unwrap_or(("", ""));
        Self {
            id: id.to_string(),
            label: label.to_string(),
            description: description.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub question: String,
    pub query: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub question: String,
    pub entities: Vec<Candidate>,
    pub predicates: Vec<Candidate>,
    pub fewshot_examples: Vec<FewShotExample>,
}

impl GenerationRequest {
    pub fn from_ids(
        question: &str,
        entities: &[String],
        predicates: &[String],
        catalog: &dyn Catalog,
    ) -> Self {
        Self {
            question: question.to_string(),
            entities: entities
                .iter()
                .map(|id| Candidate::lookup(id, catalog))
                .collect(),
            predicates: predicates
                .iter()
                .map(|id| Candidate::lookup(id, catalog))
                .collect(),
            fewshot_examples: Vec::new(),
        }
    }
}

pub fn assemble_prompt(req: &GenerationRequest) -> String {
    let mut p = String::new();
    p.push_str(INSTRUCTION);
    p.push_str("\n\n");
    if !req.fewshot_examples.is_empty() {
        p.push_str("Examples:\n");
        for ex in &req.fewshot_examples {
            p.push_str(&format!(
                "Question: {}\nQuery: {}\n\n",
                ex.question, ex.query
            ));
        }
    }
    p.push_str(&format!("Question: {}\n", req.question));
    for (title, items) in [
        ("Entities:", &req.entities),
        ("Predicates:", &req.predicates),
    ] {
        p.push_str(title);
        p.push('\n');
        for c in items {
            p.push_str(&render_candidate_line(&c.id, &c.label, &c.description));
            p.push('\n');
        }
    }
    p.push_str("Query:");
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    RemoteLlm,
    Template,
    GoldPassthrough,
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorKind::RemoteLlm => "remote-llm",
            GeneratorKind::Template => "template",
            GeneratorKind::GoldPassthrough => "gold-passthrough",
        })
    }
}

impl FromStr for GeneratorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "remote-llm" => Ok(Self::RemoteLlm),
            "template" => Ok(Self::Template),
            "gold-passthrough" => Ok(Self::GoldPassthrough),
            other => Err(format!("unknown generator {other:?}")),
        }
    }
}

#[derive(Clone, Copy)]
pub enum Generator<'a> {
    RemoteLlm(&'a dyn ChatBackend),
    Template,
    /// Harness-only: echoes the supplied gold query.
    GoldPassthrough(Option<&'a str>),
}

impl Generator<'_> {
    pub fn kind(&self) -> GeneratorKind {
        match self {
            Generator::RemoteLlm(_) => GeneratorKind::RemoteLlm,
            Generator::Template => GeneratorKind::Template,
            Generator::GoldPassthrough(_) => GeneratorKind::GoldPassthrough,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub query_text: String,
    pub backend: GeneratorKind,
    pub raw_response: String,
}

pub fn generate(
    req: &GenerationRequest,
    generator: Generator<'_>,
) -> Result<GenerationResult, GenerationError> {
    let backend = generator.kind();
    match generator {
        Generator::Template => {
            let (Some(e), Some(p)) = (req.entities.first(), req.predicates.first()) else {
                return Err(GenerationError::InsufficientCandidates);
            };
            let query_text = format!("SELECT ?x WHERE {{ wd:{} wdt:{} ?x }}", e.id, p.id);
            Ok(GenerationResult {
                raw_response: query_text.clone(),
                query_text,
                backend,
            })
        }
        Generator::GoldPassthrough(gold) => {
            let gold = gold.ok_or(GenerationError::MissingGold)?;
            Ok(GenerationResult {
                query_text: gold.to_string(),
                backend,
                raw_response: gold.to_string(),
            })
        }
        Generator::RemoteLlm(chat) => {
            let raw_response = chat.complete(&assemble_prompt(req))?;
            match extract_query(&raw_response) {
                Some(query_text) => Ok(GenerationResult {
                    query_text,
                    backend,
                    raw_response,
                }),
                None => Err(GenerationError::NoQuery { raw_response }),
            }
        }
    }
}

fn starts_with_keyword(s: &str, keyword: &str) -> bool {
    s.len() >= keyword.len()
        && s.as_bytes()[..keyword.len()].eq_ignore_ascii_case(keyword.as_bytes())
        && s[keyword.len()..]
            .chars()
            .next()
            .is_none_or(|c| !c.is_alphanumeric() && c != '_')
}

const QUERY_KEYWORDS: [&str; 3] = ["PREFIX", "SELECT", "ASK"];

fn query_start(text: &str) -> Option<usize> {
    // A line opening with a query keyword, in any case.
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if QUERY_KEYWORDS
            .iter()
            .any(|k| starts_with_keyword(trimmed, k))
        {
            return Some(offset + line.len() - trimmed.len());
        }
        offset += line.len();
    }
    // Otherwise an upper-case keyword inside a line ("Here it is: SELECT ...").
    QUERY_KEYWORDS
        .iter()
        .filter_map(|k| {
            text.match_indices(k).map(|(i, _)| i).find(|&i| {
                let before_ok = text[..i]
                    .chars()
                    .next_back()
                    .is_none_or(|c| !c.is_alphanumeric());
                before_ok && starts_with_keyword(&text[i..], k)
            })
        })
        .min()
}

fn query_end(query: &str) -> usize {
    let Some(close) = query.rfind('}') else {
        return query.len();
    };
    let after = close + 1;
    let rest = &query[after..];
    let trimmed = rest.trim_start();
    if starts_with_keyword(trimmed, "LIMIT") {
        let skipped = rest.len() - trimmed.len();
        let tail = trimmed["LIMIT".len()..].trim_start();
        let digits = tail.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits > 0 {
            return after + skipped + (trimmed.len() - tail.len()) + digits;
        }
    }
    after
}

/// Pulls a bare query out of a model reply: drops reasoning blocks, code
/// fences, leading prose and trailing commentary.
pub fn extract_query(response: &str) -> Option<String> {
    let text = match response.rfind("</think>") {
        Some(i) => &response[i + "</think>".len()..],
        None => response,
    };
    let query = fenced_block(text)
        .and_then(query_from)
        .or_else(|| query_from(&text.replace("```", "")))?;
    Some(query)
}

/// Body of the first fenced block, without its info string.
fn fenced_block(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let body = &text[open + 3..];
    let body = match body.find('\n') {
        Some(nl) if !body[..nl].contains('{') => &body[nl + 1..],
        _ => body,
    };
    Some(body.find("```").map_or(body, |close| &body[..close]))
}

fn query_from(text: &str) -> Option<String> {
    let start = query_start(text)?;
    let query = &text[start..];
    let query = query[..query_end(query)].trim();
    (!query.is_empty()).then(|| query.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectAnswer {
    pub answers: Vec<String>,
    pub llm_rejected: bool,
    pub raw_response: String,
}

pub fn direct_answer_prompt(question: &str) -> String {
    format!(
        "Answer the question using your own knowledge. Write the final answers between <answer> and </answer>, \
         separated by commas. If you cannot answer, reply \"I cannot answer\".\n\nQuestion: {question}\n"
    )
}

/// Splits a direct-answer reply; any refusal phrase wins over markers. A reply
/// without markers counts as a single answer.
pub fn parse_direct_answer<S: AsRef<str>>(response: &str, refusal_phrases: &[S]) -> DirectAnswer {
    let lower = response.to_lowercase();
    let refused = refusal_phrases
        .iter()
        .any(|p| !p.as_ref().is_empty() && lower.contains(&p.as_ref().to_lowercase()));
    let answers = if refused {
        Vec::new()
    } else {
        match answer_block(response) {
            Some(block) => block
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
            None => Some(response.trim())
                .filter(|s| !s.is_empty())
                .map(String::from)
                .into_iter()
                .collect(),
        }
    };
    DirectAnswer {
        answers,
        llm_rejected: refused,
        raw_response: response.to_string(),
    }
}

pub fn direct_answer<S: AsRef<str>>(
    question: &str,
    chat: &dyn ChatBackend,
    refusal_phrases: &[S],
) -> Result<DirectAnswer, ClientError> {
    let response = chat.complete(&direct_answer_prompt(question))?;
    Ok(parse_direct_answer(&response, refusal_phrases))
}

/// One JSON Lines line of a training file; field order is the on-disk order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub prompt: String,
    pub target: String,
    pub question_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentStats {
    pub written: usize,
    /// Examples dropped because a gold id is absent from its index.
    pub skipped: usize,
    pub skipped_ids: Vec<String>,
}

/// Up to `n` non-gold neighbours, taken round-robin across the gold items'
/// label queries so every gold item contributes its nearest ones first.
fn distractors(index: &Index, gold: &[&str], n: usize) -> Vec<String> {
    if n == 0 || gold.is_empty() {
        return Vec::new();
    }
    let gold_set: BTreeSet<&str> = gold.iter().copied().collect();
    let lists: Vec<Vec<String>> = gold
        .iter()
        .map(|id| {
            let label = index.doc(id).map_or("", |d| d.label.as_str());
            index
                .search(label, n + gold.len())
                .hits
                .into_iter()
                .map(|h| h.id)
                .filter(|h| !gold_set.contains(h.as_str()))
                .collect()
        })
        .collect();
    let mut chosen: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    let longest = lists.iter().map(Vec::len).max().unwrap_or(0);
    'outer: for rank in 0..longest {
        for list in &lists {
            if let Some(id) = list.get(rank) {
                if seen.insert(id.clone()) {
                    chosen.push(id.clone());
                    if chosen.len() == n {
                        break 'outer;
                    }
                }
            }
        }
    }
    chosen
}

fn augmented_candidates(
    index: &Index,
    gold: &BTreeSet<String>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Candidate> {
    let gold_ids: Vec<&str> = gold.iter().map(String::as_str).collect();
    let mut ids: Vec<String> = gold.iter().cloned().collect();
    ids.extend(distractors(index, &gold_ids, n));
    ids.shuffle(rng);
    ids.iter().map(|id| Candidate::lookup(id, index)).collect()
}

/// Writes one prompt/target pair per example, with gold candidates padded by
/// BM25 distractors and shuffled under `seed`.
pub fn augment_training_pairs(
    examples: &[QaExample],
    entity_index: &Index,
    predicate_index: &Index,
    n_distractors: usize,
    seed: u64,
    mut out: impl Write,
) -> Result<AugmentStats, AugmentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = AugmentStats::default();
    for ex in examples {
        let missing = ex.gold_entities.iter().any(|id| !entity_index.contains(id))
            || ex
                .gold_predicates
                .iter()
                .any(|id| !predicate_index.contains(id));
        if missing {
            stats.skipped += 1;
            stats.skipped_ids.push(ex.id.clone());
            continue;
        }
        let req = GenerationRequest {
            question: ex.question.clone(),
            entities: augmented_candidates(
                entity_index,
                &ex.gold_entities,
                n_distractors,
                &mut rng,
            ),
            predicates: augmented_candidates(
                predicate_index,
                &ex.gold_predicates,
                n_distractors,
                &mut rng,
            ),
            fewshot_examples: Vec::new(),
        };
        let pair = TrainingPair {
            prompt: assemble_prompt(&req),
            target: ex.gold_query.clone(),
            question_id: ex.id.clone(),
        };
        serde_json::to_writer(&mut out, &pair)?;
        out.write_all(b"\n")?;
        stats.written += 1;
    }
    out.flush()?;
    Ok(stats)
}

/// Reads `{question, query}` JSON Lines; blank lines are ignored.
pub fn load_fewshot(reader: impl BufRead) -> Result<Vec<FewShotExample>, FewShotError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: FewShotExample =
            serde_json::from_str(&line).map_err(|e| FewShotError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
        out.push(ex);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::{Bm25Params, CatalogDoc, CatalogKind};

    fn cand(id: &str, label: &str) -> Candidate {
        Candidate {
            id: id.into(),
            label: label.into(),
            description: String::new(),
        }
    }

    fn request(n_ent: usize, n_pred: usize) -> GenerationRequest {
        GenerationRequest {
            question: "Who directed Inception?".into(),
            entities: (1..=n_ent).map(|i| cand(&format!("Q{i}"), "e")).collect(),
            predicates: (1..=n_pred).map(|i| cand(&format!("P{i}"), "p")).collect(),
            fewshot_examples: vec![],
        }
    }

    #[test]
    fn prompt_layout() {
        let p = assemble_prompt(&request(2, 3));
        assert!(!p.contains("Examples:"));
        assert_eq!(
            p.lines()
                .filter(|l| l.starts_with('Q') && l.contains(" | "))
                .count(),
            2
        );
        assert_eq!(
            p.lines()
                .filter(|l| l.starts_with('P') && l.contains(" | "))
                .count(),
            3
        );
        let ent = p.find("Entities:").unwrap();
        let pred = p.find("Predicates:").unwrap();
        assert!(ent < pred && p.ends_with("Query:"));
        assert_eq!(p, assemble_prompt(&request(2, 3)));
    }

    #[test]
    fn prompt_with_examples() {
        let mut req = request(1, 1);
        req.fewshot_examples.push(FewShotExample {
            question: "q?".into(),
            query: "ASK { wd:Q1 wdt:P1 wd:Q2 }".into(),
        });
        let p = assemble_prompt(&req);
        assert!(p.find("Examples:").unwrap() < p.find("Question: Who").unwrap());
    }

    #[test]
    fn template_and_passthrough() {
        let r = generate(&request(1, 1), Generator::Template).unwrap();
        assert_eq!(r.query_text, "SELECT ?x WHERE { wd:Q1 wdt:P1 ?x }");
        assert!(matches!(
            generate(&request(0, 1), Generator::Template),
            Err(GenerationError::InsufficientCandidates)
        ));
        let gold = "SELECT ?x WHERE { wd:Q5 wdt:P7 ?x }";
        assert_eq!(
            generate(&request(0, 0), Generator::GoldPassthrough(Some(gold)))
                .unwrap()
                .query_text,
            gold
        );
        assert!(matches!(
            generate(&request(0, 0), Generator::GoldPassthrough(None)),
            Err(GenerationError::MissingGold)
        ));
    }

    #[test]
    fn remote_strips_fences() {
        let chat = |_: &str| -> Result<String, ClientError> {
            Ok("```sparql\nASK { wd:Q1 wdt:P1 wd:Q2 }\n```".into())
        };
        let r = generate(&request(1, 1), Generator::RemoteLlm(&chat)).unwrap();
        assert_eq!(r.query_text, "ASK { wd:Q1 wdt:P1 wd:Q2 }");
        assert_eq!(r.backend, GeneratorKind::RemoteLlm);
    }

    #[test]
    fn extraction_cases() {
        assert_eq!(
            extract_query("Sure! Here is the query:\nSELECT ?x WHERE { wd:Q1 wdt:P1 ?x } LIMIT 5\nIt lists things.").as_deref(),
            Some("SELECT ?x WHERE { wd:Q1 wdt:P1 ?x } LIMIT 5")
        );
        assert_eq!(
            extract_query(
                "<think>select the select</think>Here it is: SELECT ?x WHERE { ?x wdt:P1 wd:Q2 }"
            )
            .as_deref(),
            Some("SELECT ?x WHERE { ?x wdt:P1 wd:Q2 }")
        );
        assert_eq!(
            extract_query(
                "PREFIX wd: <http://www.wikidata.org/entity/>\nASK { wd:Q1 wdt:P1 wd:Q2 }"
            )
            .as_deref(),
            Some("PREFIX wd: <http://www.wikidata.org/entity/>\nASK { wd:Q1 wdt:P1 wd:Q2 }")
        );
        assert_eq!(
            extract_query("```SELECT ?x WHERE { ?x wdt:P1 wd:Q1 }```").as_deref(),
            Some("SELECT ?x WHERE { ?x wdt:P1 wd:Q1 }")
        );
        assert_eq!(extract_query("I have no idea."), None);
        assert_eq!(extract_query("The asking price"), None);
    }

    #[test]
    fn direct_answers() {
        let refusals = DEFAULT_REFUSAL_PHRASES;
        assert_eq!(
            parse_direct_answer("<answer>Paris</answer>", refusals).answers,
            vec!["Paris"]
        );
        let r = parse_direct_answer("Sorry, I cannot answer that.", refusals);
        assert!(r.llm_rejected && r.answers.is_empty());
        assert_eq!(
            parse_direct_answer("<answer>Paris, Lyon</answer>", refusals).answers,
            vec!["Paris", "Lyon"]
        );
        assert_eq!(
            parse_direct_answer("  Paris ", refusals).answers,
            vec!["Paris"]
        );
    }

    fn doc(id: &str, label: &str) -> CatalogDoc {
        CatalogDoc {
            id: id.into(),
            label: label.into(),
            description: String::new(),
            aliases: vec![],
        }
    }

    fn entity_index() -> Index {
        let docs = vec![
            doc("Q1", "Berlin"),
            doc("Q2", "Berlin Wall"),
            doc("Q3", "Berlin Zoo"),
            doc("Q4", "Berlin Marathon"),
            doc("Q5", "Berlin Airport"),
            doc("Q6", "Berlin Hauptbahnhof"),
            doc("Q7", "Berlin Cathedral"),
            doc("Q8", "Paris"),
        ];
        Index::build(docs, CatalogKind::Entity, Bm25Params::default(), None).unwrap()
    }

    fn predicate_index() -> Index {
        let docs = vec![
            doc("P1", "capital"),
            doc("P2", "capital of"),
            doc("P3", "population"),
        ];
        Index::build(docs, CatalogKind::Predicate, Bm25Params::default(), None).unwrap()
    }

    fn example(entities: &[&str], predicates: &[&str]) -> QaExample {
        QaExample {
            id: "x1".into(),
            question: "What is Berlin?".into(),
            gold_query: "SELECT ?x WHERE { wd:Q1 wdt:P1 ?x }".into(),
            gold_entities: entities.iter().map(|s| s.to_string()).collect(),
            gold_predicates: predicates.iter().map(|s| s.to_string()).collect(),
            gold_answers: None,
            answer_labels: None,
            dataset: "toy".into(),
            split: crate::evaluation::Split::Train,
        }
    }

    fn pairs(buf: &[u8]) -> Vec<TrainingPair> {
        buf.split(|b| *b == b'\n')
            .filter(|l| !l.is_empty())
            .map(|l| serde_json::from_slice(l).unwrap())
            .collect()
    }

    fn entity_lines(prompt: &str) -> Vec<String> {
        prompt
            .lines()
            .filter(|l| l.starts_with('Q') && l.contains(" | "))
            .map(String::from)
            .collect()
    }

    #[test]
    fn zero_distractors_keep_gold_only() {
        let mut buf = Vec::new();
        augment_training_pairs(
            &[example(&["Q1"], &["P1"])],
            &entity_index(),
            &predicate_index(),
            0,
            7,
            &mut buf,
        )
        .unwrap();
        let p = &pairs(&buf)[0];
        assert_eq!(entity_lines(&p.prompt), vec!["Q1 | Berlin | "]);
        assert_eq!(p.target, "SELECT ?x WHERE { wd:Q1 wdt:P1 ?x }");
    }

    #[test]
    fn five_neighbours_are_added() {
        let mut buf = Vec::new();
        augment_training_pairs(
            &[example(&["Q1"], &["P1"])],
            &entity_index(),
            &predicate_index(),
            5,
            7,
            &mut buf,
        )
        .unwrap();
        let lines = entity_lines(&pairs(&buf)[0].prompt);
        assert_eq!(lines.len(), 6);
        assert!(lines.iter().any(|l| l.starts_with("Q1 |")));
        assert!(!lines.iter().any(|l| l.starts_with("Q8 |")));
    }

    #[test]
    fn output_is_seed_deterministic_and_keys_ordered() {
        let run = |seed| {
            let mut buf = Vec::new();
            augment_training_pairs(
                &[example(&["Q1", "Q8"], &["P1"])],
                &entity_index(),
                &predicate_index(),
                5,
                seed,
                &mut buf,
            )
            .unwrap();
            buf
        };
        assert_eq!(run(3), run(3));
        let text = String::from_utf8(run(3)).unwrap();
        let p = text.find("\"prompt\"").unwrap();
        let t = text.find("\"target\"").unwrap();
        let q = text.find("\"question_id\"").unwrap();
        assert!(p < t && t < q);
    }

    #[test]
    fn missing_gold_is_skipped() {
        let mut buf = Vec::new();
        let stats = augment_training_pairs(
            &[example(&["Q99"], &["P1"]), example(&["Q1"], &["P1"])],
            &entity_index(),
            &predicate_index(),
            2,
            1,
            &mut buf,
        )
        .unwrap();
        assert_eq!((stats.written, stats.skipped), (1, 1));
    }

    #[test]
    fn fewshot_loader() {
        let input = "{\"question\":\"q\",\"query\":\"ASK { wd:Q1 wdt:P1 wd:Q2 }\"}\n\n";
        assert_eq!(load_fewshot(input.as_bytes()).unwrap().len(), 1);
        assert!(matches!(
            load_fewshot("{\"question\":1}".as_bytes()),
            Err(FewShotError::Malformed { line: 1, .. })
        ));
    }
}
