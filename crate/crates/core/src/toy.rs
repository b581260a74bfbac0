//! A small bundled knowledge graph and 20-question dataset with
//! Wikidata-style ids, used for offline runs, examples and tests.

use crate::evaluation::{load_dataset_from_reader, QaExample};
use crate::kgstore::Snapshot;

pub const ENTITIES: &str = include_str!("../data/toy/entities.jsonl");
pub const PREDICATES: &str = include_str!("../data/toy/predicates.jsonl");
pub const TRIPLES: &str = include_str!("../data/toy/triples.tsv");
pub const QUESTIONS: &str = include_str!("../data/toy/questions.jsonl");

pub fn snapshot() -> Snapshot {
    Snapshot::from_readers(
        ("toy/entities.jsonl", ENTITIES.as_bytes()),
        ("toy/predicates.jsonl", PREDICATES.as_bytes()),
        ("toy/triples.tsv", TRIPLES.as_bytes()),
    )
    .expect("bundled toy graph is valid")
}

pub fn questions() -> Vec<QaExample> {
    load_dataset_from_reader("toy/questions.jsonl", "toy", QUESTIONS.as_bytes())
        .expect("bundled toy questions are valid")
        .examples
}
