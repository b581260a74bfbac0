//! Query-based knowledge-graph question answering.
//!
//! The pipeline retrieves entity and predicate candidates with BM25,
//! disambiguates them, checks that the chosen entities and predicates are
//! connected in the graph, generates a SPARQL query, executes it, rejects
//! erroring or empty results, and scores answers by execution match.

pub mod client;
pub mod disambiguation;
pub mod evaluation;
pub mod generation;
pub mod guard;
pub mod ids;
pub mod kgstore;
pub mod retrieval;
pub mod sparql;
pub mod throttle;
pub mod toy;
