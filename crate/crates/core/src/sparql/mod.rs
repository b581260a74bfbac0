//! Restricted SPARQL: parsing, local execution over a snapshot, remote
//! execution against an endpoint, and answer normalisation.

mod answer;
mod ast;
mod local;
mod parser;
mod remote;

use std::sync::Arc;

use thiserror::Error;

pub use answer::{normalize_value, AnswerSet, ENTITY_NS, PREDICATE_NS};
pub use ast::{PatternTerm, QueryAst, QueryForm, TriplePattern};
pub use local::execute_local;
pub use parser::{parse, ParseError, ParseErrorKind};
pub use remote::{
    parse_results_document, EndpointConfig, RemoteExecutor, MAX_GET_QUERY_BYTES, MAX_RESULT_ROWS,
};

pub(crate) use remote::{millis, secs};

use crate::kgstore::Snapshot;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("execution error: {0}")]
    Execution(String),
    #[error("remote endpoint error (status {status:?}): {message}; body: {body}")]
    Remote {
        status: Option<u16>,
        message: String,
        body: String,
    },
}

/// Runs query text and returns normalised answers.
pub trait Executor: Send + Sync {
    fn execute(&self, query: &str) -> Result<AnswerSet, ExecError>;

    /// Local executors parse before running, so syntax problems surface as
    /// [`ExecError::Parse`].
    fn is_local(&self) -> bool;
}

/// Parses and evaluates queries against an in-memory snapshot.
#[derive(Debug, Clone)]
pub struct LocalExecutor {
    snapshot: Arc<Snapshot>,
}

impl LocalExecutor {
    pub fn new(snapshot: Arc<Snapshot>) -> Self {
        Self { snapshot }
    }
}

impl Executor for LocalExecutor {
    fn execute(&self, query: &str) -> Result<AnswerSet, ExecError> {
        let ast = parse(query)?;
        execute_local(&ast, &self.snapshot)
    }

    fn is_local(&self) -> bool {
        true
    }
}
