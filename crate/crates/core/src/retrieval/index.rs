use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{tokenize, Bm25Params, CandidateSet, CatalogDoc, CatalogKind, Hit, RetrievalError};

/// Header written as the first line of a saved index.
pub const INDEX_FORMAT_VERSION: &str = "kgqa-bm25-index 1";

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    kind: CatalogKind,
    k1: f64,
    b: f64,
    docs: usize,
}

/// Immutable in-memory inverted index.
#[derive(Debug, Clone)]
pub struct Index {
    kind: CatalogKind,
    params: Bm25Params,
    docs: Vec<CatalogDoc>,
    doc_len: Vec<u32>,
    avg_len: f64,
    postings: HashMap<String, Vec<(u32, u32)>>,
    positions: HashMap<String, usize>,
}

impl Index {
    /// Indexes `docs`, keeping only ids in `keep` when given.
    pub fn build<I>(
        docs: I,
        kind: CatalogKind,
        params: Bm25Params,
        keep: Option<&BTreeSet<String>>,
    ) -> Result<Self, RetrievalError>
    where
        I: IntoIterator<Item = CatalogDoc>,
    {
        params.validate()?;
        let docs: Vec<CatalogDoc> = docs
            .into_iter()
            .filter(|d| keep.is_none_or(|k| k.contains(&d.id)))
            .collect();
        if docs.is_empty() {
            return Err(RetrievalError::EmptyCatalog);
        }

        let mut positions = HashMap::with_capacity(docs.len());
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            if positions.insert(doc.id.clone(), i).is_some() {
                return Err(RetrievalError::DuplicateId(doc.id.clone()));
            }
            let tokens = tokenize(&doc.text());
            doc_len.push(tokens.len() as u32);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((i as u32, count));
            }
        }
        let avg_len = doc_len.iter().map(|&l| l as f64).sum::<f64>() / docs.len() as f64;

        Ok(Self {
            kind,
            params,
            docs,
            doc_len,
            avg_len,
            postings,
            positions,
        })
    }

    pub fn kind(&self) -> CatalogKind {
        self.kind
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    pub fn doc(&self, id: &str) -> Option<&CatalogDoc> {
        self.positions.get(id).map(|&i| &self.docs[i])
    }

    pub fn docs(&self) -> &[CatalogDoc] {
        &self.docs
    }

    /// Same documents under different parameters.
    pub fn with_params(&self, params: Bm25Params) -> Result<Self, RetrievalError> {
        params.validate()?;
        Ok(Self {
            params,
            ..self.clone()
        })
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.docs.len() as f64;
        let df = df as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Scores every document. Repeated query tokens contribute once per
    /// occurrence.
    fn score_all(&self, query: &str) -> Vec<f64> {
        let Bm25Params { k1, b } = self.params;
        let mut scores = vec![0.0; self.docs.len()];
        for token in tokenize(query) {
            let Some(list) = self.postings.get(&token) else {
                continue;
            };
            let idf = self.idf(list.len());
            for &(doc, tf) in list {
                let tf = tf as f64;
                let norm = 1.0 - b + b * self.doc_len[doc as usize] as f64 / self.avg_len;
                scores[doc as usize] += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
        }
        scores
    }

    /// Top `k` documents with a positive score.
    pub fn search(&self, query: &str, k: usize) -> CandidateSet {
        let scores = self.score_all(query);
        let mut hits: Vec<Hit> = scores
            .into_iter()
            .enumerate()
            .filter(|&(_, s)| s > 0.0)
            .map(|(i, score)| Hit {
                id: self.docs[i].id.clone(),
                score,
            })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        hits.truncate(k);
        CandidateSet {
            query: query.to_string(),
            kind: self.kind,
            hits,
        }
    }

    pub fn save(&self, mut out: impl Write) -> Result<(), RetrievalError> {
        writeln!(out, "{INDEX_FORMAT_VERSION}")?;
        let header = IndexHeader {
            kind: self.kind,
            k1: self.params.k1,
            b: self.params.b,
            docs: self.docs.len(),
        };
        writeln!(out, "{}", to_json(&header)?)?;
        for doc in &self.docs {
            writeln!(out, "{}", to_json(doc)?)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(input: impl BufRead) -> Result<Self, RetrievalError> {
        let mut lines = input.lines();
        let version = lines
            .next()
            .transpose()?
            .ok_or_else(|| RetrievalError::Format("empty file".into()))?;
        if version.trim_end() != INDEX_FORMAT_VERSION {
            return Err(RetrievalError::Format(format!(
                "unsupported header {version:?}, expected {INDEX_FORMAT_VERSION:?}"
            )));
        }
        let header: IndexHeader = match lines.next().transpose()? {
            Some(line) => from_json(&line, 2)?,
            None => return Err(RetrievalError::Format("missing header record".into())),
        };
        let mut docs = Vec::with_capacity(header.docs);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            docs.push(from_json::<CatalogDoc>(&line, i + 3)?);
        }
        if docs.len() != header.docs {
            return Err(RetrievalError::Format(format!(
                "header announces {} documents, found {}",
                header.docs,
                docs.len()
            )));
        }
        Index::build(
            docs,
            header.kind,
            Bm25Params::new(header.k1, header.b)?,
            None,
        )
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, RetrievalError> {
    serde_json::to_string(value).map_err(|e| RetrievalError::Format(e.to_string()))
}

fn from_json<T: serde::de::DeserializeOwned>(
    line: &str,
    lineno: usize,
) -> Result<T, RetrievalError> {
    serde_json::from_str(line).map_err(|e| RetrievalError::Format(format!("line {lineno}: {e}")))
}
