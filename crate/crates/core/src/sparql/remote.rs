//! SPARQL-protocol client for a remote endpoint (e.g. the public Wikidata
//! query service).

use std::collections::HashMap;
use std::thread;
use std::time::Duration;

use reqwest::blocking::{Client, Response};
use reqwest::header::{ACCEPT, USER_AGENT};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::answer::AnswerSet;
use super::{ExecError, Executor};
use crate::throttle::{backoff_delay, Semaphore, Spacer};

/// Queries longer than this are sent as a form-encoded POST.
pub const MAX_GET_QUERY_BYTES: usize = 2000;
/// Rows kept from a results document; the rest are dropped with a warning.
pub const MAX_RESULT_ROWS: usize = 10_000;
const SPARQL_RESULTS_JSON: &str = "application/sparql-results+json";
const MAX_BACKOFF: Duration = Duration::from_secs(30);
const SNIPPET_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(with = "secs")]
    pub timeout: Duration,
    pub retries: u32,
    #[serde(with = "millis")]
    pub politeness_delay: Duration,
    pub user_agent: String,
    pub max_in_flight: usize,
    #[serde(with = "millis")]
    pub backoff_base: Duration,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            url: "https://query.wikidata.org/sparql".into(),
            timeout: Duration::from_secs(60),
            retries: 3,
            politeness_delay: Duration::from_millis(500),
            user_agent: concat!(
                "kgqa/",
                env!("CARGO_PKG_VERSION"),
                " (query-based KGQA pipeline)"
            )
            .into(),
            max_in_flight: 2,
            backoff_base: Duration::from_secs(1),
        }
    }
}

pub(crate) mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

pub(crate) mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Deserialize)]
struct ResultsDocument {
    #[serde(default)]
    head: Option<Head>,
    #[serde(default)]
    results: Option<Results>,
    #[serde(default)]
    boolean: Option<bool>,
}

#[derive(Debug, Deserialize)]
struct Head {
    #[serde(default)]
    vars: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct Results {
    bindings: Vec<HashMap<String, BindingValue>>,
}

#[derive(Debug, Deserialize)]
struct BindingValue {
    #[serde(rename = "type")]
    #[allow(dead_code)]
    kind: String,
    value: String,
}

fn snippet(body: &str) -> String {
    body.chars().take(SNIPPET_CHARS).collect()
}

/// Converts a `application/sparql-results+json` document into an [`AnswerSet`].
pub fn parse_results_document(body: &str) -> Result<AnswerSet, ExecError> {
    let doc: ResultsDocument = serde_json::from_str(body).map_err(|e| ExecError::Remote {
        status: None,
        message: format!("malformed results document: {e}"),
        body: snippet(body),
    })?;
    if let Some(truth) = doc.boolean {
        return Ok(AnswerSet::boolean(truth));
    }
    let Some(results) = doc.results else {
        return Err(ExecError::Remote {
            status: None,
            message: "results document has neither results nor boolean".into(),
            body: snippet(body),
        });
    };
    let vars = match doc.head {
        Some(h) if !h.vars.is_empty() => h.vars,
        // Fall back to the keys of the first row, sorted for stability.
        _ => {
            let mut keys: Vec<String> = results
                .bindings
                .first()
                .map(|row| row.keys().cloned().collect())
                .unwrap_or_default();
            keys.sort();
            keys
        }
    };
    let mut bindings = results.bindings;
    if bindings.len() > MAX_RESULT_ROWS {
        log::warn!(
            "endpoint returned {} rows; keeping the first {MAX_RESULT_ROWS}",
            bindings.len()
        );
        bindings.truncate(MAX_RESULT_ROWS);
    }
    let rows = bindings.iter().filter_map(|row| {
        if vars.len() == 1 {
            row.get(&vars[0]).map(|v| vec![v.value.as_str()])
        } else {
            Some(
                vars.iter()
                    .map(|v| row.get(v).map_or("", |b| b.value.as_str()))
                    .collect(),
            )
        }
    });
    Ok(AnswerSet::from_rows(rows, vars.len().max(1)))
}

/// Executes queries against a remote endpoint with an in-flight cap,
/// politeness spacing and bounded retry on rate limiting.
pub struct RemoteExecutor {
    config: EndpointConfig,
    client: Client,
    gate: Semaphore,
    spacer: Spacer,
}

impl RemoteExecutor {
    pub fn new(config: EndpointConfig) -> Result<Self, ExecError> {
        if config.user_agent.trim().is_empty() {
            return Err(ExecError::Execution(
                "a User-Agent is required for remote endpoints".into(),
            ));
        }
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ExecError::Remote {
                status: None,
                message: format!("cannot build HTTP client: {e}"),
                body: String::new(),
            })?;
        Ok(Self {
            gate: Semaphore::new(config.max_in_flight),
            spacer: Spacer::new(config.politeness_delay),
            config,
            client,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn send(&self, query: &str) -> reqwest::Result<Response> {
        let request = if query.len() > MAX_GET_QUERY_BYTES {
            self.client.post(&self.config.url).form(&[("query", query)])
        } else {
            self.client.get(&self.config.url).query(&[("query", query)])
        };
        request
            .header(ACCEPT, SPARQL_RESULTS_JSON)
            .header(USER_AGENT, &self.config.user_agent)
            .send()
    }

    pub fn execute_remote(&self, query: &str) -> Result<AnswerSet, ExecError> {
        let mut attempt = 0;
        loop {
            let outcome = {
                let _permit = self.gate.acquire();
                self.spacer.wait();
                self.send(query)
            };
            let retryable_error = match outcome {
                Ok(resp) => {
                    let status = resp.status();
                    let body = resp.text().unwrap_or_default();
                    if status.is_success() {
                        return parse_results_document(&body);
                    }
                    let err = ExecError::Remote {
                        status: Some(status.as_u16()),
                        message: format!("endpoint returned {status}"),
                        body: snippet(&body),
                    };
                    if status == StatusCode::TOO_MANY_REQUESTS
                        || status == StatusCode::SERVICE_UNAVAILABLE
                    {
                        err
                    } else {
                        return Err(err);
                    }
                }
                Err(e) if e.is_timeout() || e.is_connect() => ExecError::Remote {
                    status: None,
                    message: format!("transport error: {e}"),
                    body: String::new(),
                },
                Err(e) => {
                    return Err(ExecError::Remote {
                        status: None,
                        message: format!("transport error: {e}"),
                        body: String::new(),
                    })
                }
            };
            if attempt >= self.config.retries {
                return Err(retryable_error);
            }
            let delay = backoff_delay(self.config.backoff_base, attempt, MAX_BACKOFF);
            log::debug!("retrying remote query in {delay:?} after: {retryable_error}");
            thread::sleep(delay);
            attempt += 1;
        }
    }
}

impl Executor for RemoteExecutor {
    fn execute(&self, query: &str) -> Result<AnswerSet, ExecError> {
        self.execute_remote(query)
    }

    fn is_local(&self) -> bool {
        false
    }
}
