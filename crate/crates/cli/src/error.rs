use std::fmt;

use kgqa_core::client::ClientError;
use kgqa_core::disambiguation::DisambiguationError;
use kgqa_core::evaluation::{DatasetError, PipelineError, UnknownDataset};
use kgqa_core::generation::{AugmentError, FewShotError, GenerationError};
use kgqa_core::kgstore::LoadError;
use kgqa_core::retrieval::RetrievalError;
use kgqa_core::sparql::ExecError;

/// Exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Remote,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Remote => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Config => "config",
            Kind::Data => "data",
            Kind::Remote => "remote",
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(kind: Kind, error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            error: error.into(),
        }
    }

    pub fn config(message: impl fmt::Display) -> Self {
        Self::new(Kind::Config, anyhow::anyhow!("{message}"))
    }

    pub fn data(message: impl fmt::Display) -> Self {
        Self::new(Kind::Data, anyhow::anyhow!("{message}"))
    }

    /// `kgqa: error[<kind>]: <message>` on one line. Causes already quoted
    /// by an outer message are not repeated.
    pub fn render(&self) -> String {
        let mut message = String::new();
        for cause in self.error.chain() {
            let text = cause.to_string();
            if message.contains(&text) {
                continue;
            }
            if !message.is_empty() {
                message.push_str(": ");
            }
            message.push_str(&text);
        }
        format!(
            "kgqa: error[{}]: {}",
            self.kind.as_str(),
            message.replace(['\n', '\r'], " ")
        )
    }
}

pub type Outcome<T> = Result<T, Failure>;

pub trait Classify<T> {
    fn or_fail(self, kind: Kind, context: impl fmt::Display) -> Outcome<T>;
}

impl<T, E> Classify<T> for Result<T, E>
where
    E: Into<anyhow::Error>,
{
    fn or_fail(self, kind: Kind, context: impl fmt::Display) -> Outcome<T> {
        self.map_err(|e| Failure::new(kind, e.into().context(context.to_string())))
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        Failure::new(Kind::Data, e)
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Failure::new(Kind::Data, e)
    }
}

impl From<UnknownDataset> for Failure {
    fn from(e: UnknownDataset) -> Self {
        Failure::new(Kind::Config, e)
    }
}

impl From<RetrievalError> for Failure {
    fn from(e: RetrievalError) -> Self {
        let kind = match e {
            RetrievalError::InvalidParams { .. }
            | RetrievalError::UnknownPreset(_)
            | RetrievalError::InvalidGrid(..) => Kind::Config,
            _ => Kind::Data,
        };
        Failure::new(kind, e)
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        let kind = match e {
            ClientError::MissingApiKey(_) | ClientError::InvalidConfig(_) => Kind::Config,
            _ => Kind::Remote,
        };
        Failure::new(kind, e)
    }
}

impl From<ExecError> for Failure {
    fn from(e: ExecError) -> Self {
        let kind = match e {
            ExecError::Remote { .. } => Kind::Remote,
            _ => Kind::Data,
        };
        Failure::new(kind, e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::new(Kind::Config, e)
    }
}

impl From<DisambiguationError> for Failure {
    fn from(e: DisambiguationError) -> Self {
        match e {
            DisambiguationError::Backend(c) => Failure::from(c),
        }
    }
}

impl From<GenerationError> for Failure {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::Backend(c) => Failure::from(c),
            GenerationError::NoQuery { .. } => Failure::new(Kind::Remote, e),
            GenerationError::InsufficientCandidates | GenerationError::MissingGold => {
                Failure::new(Kind::Config, e)
            }
        }
    }
}

impl From<AugmentError> for Failure {
    fn from(e: AugmentError) -> Self {
        Failure::new(Kind::Data, e)
    }
}

impl From<FewShotError> for Failure {
    fn from(e: FewShotError) -> Self {
        Failure::new(Kind::Data, e)
    }
}
