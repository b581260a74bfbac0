use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A position in a triple pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum PatternTerm {
    /// Variable name without the `?` sigil.
    Var(String),
    /// `wd:Q…`
    Entity(String),
    /// `wdt:P…`
    Predicate(String),
    Literal(String),
}

impl PatternTerm {
    pub fn var(&self) -> Option<&str> {
        match self {
            PatternTerm::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, PatternTerm::Var(_))
    }
}

impl fmt::Display for PatternTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternTerm::Var(v) => write!(f, "?{v}"),
            PatternTerm::Entity(q) => write!(f, "wd:{q}"),
            PatternTerm::Predicate(p) => write!(f, "wdt:{p}"),
            PatternTerm::Literal(l) => write_quoted(f, l),
        }
    }
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\r' => f.write_str("\\r")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn new(subject: PatternTerm, predicate: PatternTerm, object: PatternTerm) -> Self {
        Self {
            subject,
            predicate,
            object,
        }
    }

    pub fn terms(&self) -> [&PatternTerm; 3] {
        [&self.subject, &self.predicate, &self.object]
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.terms().into_iter().filter_map(PatternTerm::var)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum QueryForm {
    Select {
        distinct: bool,
        projection: Vec<String>,
    },
    Count {
        distinct: bool,
        var: String,
        alias: String,
    },
    Ask,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryAst {
    pub form: QueryForm,
    pub patterns: Vec<TriplePattern>,
    pub limit: Option<u64>,
}

impl QueryAst {
    /// Variables in order of first occurrence in the patterns.
    pub fn pattern_vars(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.patterns
            .iter()
            .flat_map(TriplePattern::vars)
            .filter(|v| seen.insert(*v))
            .collect()
    }

    /// Entity ids referenced as constants.
    pub fn entities(&self) -> BTreeSet<&str> {
        self.patterns
            .iter()
            .flat_map(|p| p.terms())
            .filter_map(|t| match t {
                PatternTerm::Entity(e) => Some(e.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Predicate ids referenced as constants.
    pub fn predicates(&self) -> BTreeSet<&str> {
        self.patterns
            .iter()
            .filter_map(|p| match &p.predicate {
                PatternTerm::Predicate(id) => Some(id.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Canonical single-line serialisation; parsing it yields `self` again.
    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.form {
            QueryForm::Select {
                distinct,
                projection,
            } => {
                f.write_str("SELECT ")?;
                if *distinct {
                    f.write_str("DISTINCT ")?;
                }
                for v in projection {
                    write!(f, "?{v} ")?;
                }
                f.write_str("WHERE ")?;
            }
            QueryForm::Count {
                distinct,
                var,
                alias,
            } => {
                let d = if *distinct { "DISTINCT " } else { "" };
                write!(f, "SELECT (COUNT({d}?{var}) AS ?{alias}) WHERE ")?;
            }
            QueryForm::Ask => f.write_str("ASK ")?,
        }
        f.write_str("{ ")?;
        for (i, p) in self.patterns.iter().enumerate() {
            if i > 0 {
                f.write_str(" . ")?;
            }
            write!(f, "{} {} {}", p.subject, p.predicate, p.object)?;
        }
        f.write_str(" }")?;
        if let Some(n) = self.limit {
            write!(f, " LIMIT {n}")?;
        }
        Ok(())
    }
}
