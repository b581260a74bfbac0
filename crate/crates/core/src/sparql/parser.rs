//! Parser for the supported SPARQL subset:
//!
//! ```text
//! query    := prefix* (select | ask) modifier*
//! prefix   := PREFIX (wd: | wdt: | rdfs:) <iri>
//! select   := SELECT DISTINCT? (var+ | "(" COUNT "(" DISTINCT? var ")" AS var ")") WHERE? group
//! ask      := ASK WHERE? group
//! group    := "{" pattern ("." pattern)* "."? "}"
//! modifier := LIMIT integer
//! ```
//!
//! Keywords are case-insensitive. Valid SPARQL outside this subset (FILTER,
//! OPTIONAL, property paths, qualifier prefixes, ...) is reported as
//! [`ParseErrorKind::UnsupportedConstruct`]; anything else is a
//! [`ParseErrorKind::SyntaxError`].

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use super::answer::{ENTITY_NS, PREDICATE_NS};
use super::ast::{PatternTerm, QueryAst, QueryForm, TriplePattern};
use crate::ids::{is_entity_id, is_predicate_id};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParseErrorKind {
    SyntaxError,
    UnsupportedConstruct,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::SyntaxError => "syntax-error",
            ParseErrorKind::UnsupportedConstruct => "unsupported-construct",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset} near {token:?}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Text of the first offending token (empty at end of input).
    pub token: String,
    /// Byte offset of that token in the query text.
    pub offset: usize,
    pub message: String,
}

const KNOWN_PREFIXES: [&str; 3] = ["wd", "wdt", "rdfs"];

const UNSUPPORTED_KEYWORDS: [&str; 22] = [
    "FILTER",
    "OPTIONAL",
    "UNION",
    "MINUS",
    "BIND",
    "VALUES",
    "SERVICE",
    "GRAPH",
    "FROM",
    "NAMED",
    "ORDER",
    "GROUP",
    "HAVING",
    "OFFSET",
    "REDUCED",
    "CONSTRUCT",
    "DESCRIBE",
    "BASE",
    "EXISTS",
    "NOT",
    "INSERT",
    "DELETE",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Var(String),
    PName { prefix: String, local: String },
    Iri(String),
    Str(String),
    Num(String),
    LangTag(String),
    Punct(char),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
    text: String,
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn lex(input: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut chars = input.char_indices().peekable();
    let text_from = |start: usize, end: usize| input[start..end].to_string();

    while let Some(&(start, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '#' {
            while chars.next_if(|&(_, c)| c != '\n').is_some() {}
            continue;
        }
        chars.next();
        let tok = match c {
            '?' | '$' if chars.peek().is_some_and(|&(_, n)| is_name_char(n)) => {
                let mut end = start + 1;
                while let Some((i, n)) = chars.next_if(|&(_, n)| is_name_char(n)) {
                    end = i + n.len_utf8();
                }
                Tok::Var(text_from(start + 1, end))
            }
            '<' => {
                let rest = &input[start + 1..];
                match rest.find(|ch: char| ch == '>' || ch.is_whitespace()) {
                    Some(i) if rest[i..].starts_with('>') => {
                        let iri = rest[..i].to_string();
                        for _ in 0..iri.chars().count() + 1 {
                            chars.next();
                        }
                        Tok::Iri(iri)
                    }
                    _ => Tok::Punct('<'),
                }
            }
            '"' | '\'' => {
                let quote = c;
                let mut value = String::new();
                let mut closed = false;
                while let Some((_, ch)) = chars.next() {
                    match ch {
                        '\\' => match chars.next() {
                            Some((_, 'n')) => value.push('\n'),
                            Some((_, 'r')) => value.push('\r'),
                            Some((_, 't')) => value.push('\t'),
                            Some((_, other)) => value.push(other),
                            None => break,
                        },
                        ch if ch == quote => {
                            closed = true;
                            break;
                        }
                        ch => value.push(ch),
                    }
                }
                if !closed {
                    return Err(ParseError {
                        kind: ParseErrorKind::SyntaxError,
                        token: text_from(start, input.len()),
                        offset: start,
                        message: "unterminated string literal".into(),
                    });
                }
                Tok::Str(value)
            }
            '@' if chars.peek().is_some_and(|&(_, n)| n.is_ascii_alphabetic()) => {
                let mut end = start + 1;
                while let Some((i, n)) =
                    chars.next_if(|&(_, n)| n.is_ascii_alphanumeric() || n == '-')
                {
                    end = i + n.len_utf8();
                }
                Tok::LangTag(text_from(start + 1, end))
            }
            c if c.is_ascii_digit() => {
                let mut end = start + 1;
                while let Some((i, _)) = chars.next_if(|&(_, n)| n.is_ascii_digit()) {
                    end = i + 1;
                }
                // A decimal point only when a digit follows; otherwise it ends the pattern.
                let after = &input[end..];
                if after.starts_with('.') && after[1..].starts_with(|d: char| d.is_ascii_digit()) {
                    chars.next();
                    end += 1;
                    while let Some((i, _)) = chars.next_if(|&(_, n)| n.is_ascii_digit()) {
                        end = i + 1;
                    }
                }
                Tok::Num(text_from(start, end))
            }
            c if is_name_char(c) || c == ':' => {
                let mut end = start + c.len_utf8();
                if c != ':' {
                    while let Some((i, n)) = chars.next_if(|&(_, n)| is_name_char(n) || n == '-') {
                        end = i + n.len_utf8();
                    }
                }
                let name = text_from(start, end);
                let has_colon = c == ':' || chars.next_if(|&(_, n)| n == ':').is_some();
                if has_colon {
                    let prefix = name.trim_end_matches(':').to_string();
                    let mut local = String::new();
                    while let Some((_, n)) = chars.next_if(|&(_, n)| is_name_char(n) || n == '-') {
                        local.push(n);
                    }
                    Tok::PName { prefix, local }
                } else {
                    Tok::Word(name)
                }
            }
            other => Tok::Punct(other),
        };
        let end = chars.peek().map_or(input.len(), |&(i, _)| i);
        tokens.push(Token {
            tok,
            offset: start,
            text: text_from(start, end).trim_end().to_string(),
        });
    }
    tokens.push(Token {
        tok: Tok::Eof,
        offset: input.len(),
        text: String::new(),
    });
    Ok(tokens)
}

#[derive(Clone, Copy, PartialEq)]
enum Position {
    Subject,
    Predicate,
    Object,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    var_offsets: HashMap<String, usize>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(
        &self,
        token: &Token,
        kind: ParseErrorKind,
        message: impl Into<String>,
    ) -> ParseError {
        ParseError {
            kind,
            token: token.text.clone(),
            offset: token.offset,
            message: message.into(),
        }
    }

    fn syntax(&self, message: impl Into<String>) -> ParseError {
        self.error_at(self.peek(), ParseErrorKind::SyntaxError, message)
    }

    fn unsupported(&self, message: impl Into<String>) -> ParseError {
        self.error_at(self.peek(), ParseErrorKind::UnsupportedConstruct, message)
    }

    fn peek_keyword(&self) -> Option<String> {
        match &self.peek().tok {
            Tok::Word(w) => Some(w.to_ascii_uppercase()),
            _ => None,
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        self.peek_keyword().as_deref() == Some(kw)
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.syntax(format!("expected {kw}")))
        }
    }

    fn at_punct(&self, c: char) -> bool {
        self.peek().tok == Tok::Punct(c)
    }

    fn expect_punct(&mut self, c: char) -> Result<(), ParseError> {
        if self.at_punct(c) {
            self.advance();
            Ok(())
        } else {
            Err(self.syntax(format!("expected '{c}'")))
        }
    }

    fn check_unsupported_keyword(&self) -> Result<(), ParseError> {
        match self.peek_keyword() {
            Some(kw) if UNSUPPORTED_KEYWORDS.contains(&kw.as_str()) => {
                Err(self.unsupported(format!("{kw} is not supported")))
            }
            _ => Ok(()),
        }
    }

    fn expect_var(&mut self) -> Result<String, ParseError> {
        match self.peek().tok.clone() {
            Tok::Var(v) => {
                let t = self.advance();
                self.var_offsets.entry(v.clone()).or_insert(t.offset);
                Ok(v)
            }
            _ => Err(self.syntax("expected a variable")),
        }
    }

    fn parse_query(&mut self) -> Result<QueryAst, ParseError> {
        while self.at_keyword("PREFIX") {
            self.parse_prefix()?;
        }
        self.check_unsupported_keyword()?;
        let form = if self.eat_keyword("SELECT") {
            self.parse_select_clause()?
        } else if self.eat_keyword("ASK") {
            QueryForm::Ask
        } else {
            return Err(self.syntax("expected SELECT or ASK"));
        };
        self.check_unsupported_keyword()?;
        self.eat_keyword("WHERE");
        let patterns = self.parse_group()?;
        let limit = self.parse_modifiers()?;
        let ast = QueryAst {
            form,
            patterns,
            limit,
        };
        self.validate(&ast)?;
        Ok(ast)
    }

    fn parse_prefix(&mut self) -> Result<(), ParseError> {
        self.advance();
        match &self.peek().tok {
            Tok::PName { prefix, local } if local.is_empty() => {
                if !KNOWN_PREFIXES.contains(&prefix.as_str()) {
                    return Err(self.unsupported(format!("prefix {prefix}: is not supported")));
                }
            }
            _ => return Err(self.syntax("expected a prefix name")),
        }
        self.advance();
        match self.peek().tok {
            Tok::Iri(_) => {
                self.advance();
                Ok(())
            }
            _ => Err(self.syntax("expected an IRI")),
        }
    }

    fn parse_select_clause(&mut self) -> Result<QueryForm, ParseError> {
        self.check_unsupported_keyword()?;
        let distinct = self.eat_keyword("DISTINCT");
        self.check_unsupported_keyword()?;
        if self.at_punct('(') {
            self.advance();
            match self.peek_keyword().as_deref() {
                Some("COUNT") => {
                    self.advance();
                }
                Some("SUM" | "AVG" | "MIN" | "MAX" | "SAMPLE" | "GROUP_CONCAT") => {
                    return Err(self.unsupported("only COUNT aggregates are supported"));
                }
                _ => return Err(self.syntax("expected COUNT")),
            }
            self.expect_punct('(')?;
            let inner_distinct = self.eat_keyword("DISTINCT");
            if self.at_punct('*') {
                return Err(self.unsupported("COUNT(*) is not supported"));
            }
            let var = self.expect_var()?;
            self.expect_punct(')')?;
            self.expect_keyword("AS")?;
            let alias = match self.peek().tok.clone() {
                Tok::Var(v) => {
                    self.advance();
                    v
                }
                _ => return Err(self.syntax("expected a variable")),
            };
            self.expect_punct(')')?;
            if matches!(self.peek().tok, Tok::Var(_)) || self.at_punct('(') {
                return Err(self.unsupported("COUNT cannot be combined with other projections"));
            }
            return Ok(QueryForm::Count {
                distinct: inner_distinct,
                var,
                alias,
            });
        }
        if self.at_punct('*') {
            return Err(self.unsupported("SELECT * is not supported"));
        }
        let mut projection = Vec::new();
        while matches!(self.peek().tok, Tok::Var(_)) {
            let v = self.expect_var()?;
            if !projection.contains(&v) {
                projection.push(v);
            }
        }
        if projection.is_empty() {
            return Err(self.syntax("expected at least one projected variable"));
        }
        if self.at_punct('(') {
            return Err(self.unsupported("projection expressions are not supported"));
        }
        Ok(QueryForm::Select {
            distinct,
            projection,
        })
    }

    fn parse_group(&mut self) -> Result<Vec<TriplePattern>, ParseError> {
        self.expect_punct('{')?;
        let mut patterns = Vec::new();
        loop {
            if self.at_punct('}') {
                self.advance();
                break;
            }
            self.check_unsupported_keyword()?;
            if self.at_punct('{') {
                return Err(self.unsupported("nested groups and subqueries are not supported"));
            }
            if self.at_keyword("SELECT") {
                return Err(self.unsupported("subqueries are not supported"));
            }
            if self.peek().tok == Tok::Eof {
                return Err(self.syntax("unterminated group, expected '}'"));
            }
            patterns.push(self.parse_triple()?);
            match &self.peek().tok {
                Tok::Punct('.') => {
                    self.advance();
                }
                Tok::Punct('}') => {}
                Tok::Punct(';') | Tok::Punct(',') => {
                    return Err(self.unsupported("predicate-object lists are not supported"))
                }
                Tok::Word(_) => {
                    self.check_unsupported_keyword()?;
                    return Err(self.syntax("expected '.' or '}'"));
                }
                _ => return Err(self.syntax("expected '.' or '}'")),
            }
        }
        if patterns.is_empty() {
            return Err(self.error_at(
                &self.tokens[self.pos.saturating_sub(1)],
                ParseErrorKind::SyntaxError,
                "empty graph pattern",
            ));
        }
        Ok(patterns)
    }

    fn parse_triple(&mut self) -> Result<TriplePattern, ParseError> {
        let subject = self.parse_term(Position::Subject)?;
        let predicate = self.parse_term(Position::Predicate)?;
        if let Tok::Punct(c @ ('/' | '|' | '*' | '+' | '?')) = self.peek().tok {
            return Err(self.unsupported(format!("property path operator '{c}' is not supported")));
        }
        let object = self.parse_term(Position::Object)?;
        Ok(TriplePattern::new(subject, predicate, object))
    }

    fn parse_term(&mut self, position: Position) -> Result<PatternTerm, ParseError> {
        let token = self.peek().clone();
        let term = match &token.tok {
            Tok::Var(v) => {
                self.var_offsets.entry(v.clone()).or_insert(token.offset);
                PatternTerm::Var(v.clone())
            }
            Tok::PName { prefix, local } => match prefix.as_str() {
                "wd" if is_entity_id(local) => PatternTerm::Entity(local.clone()),
                "wdt" if is_predicate_id(local) => PatternTerm::Predicate(local.clone()),
                "wd" | "wdt" => return Err(self.syntax(format!("invalid identifier {local:?}"))),
                _ => return Err(self.unsupported(format!("prefix {prefix}: is not supported"))),
            },
            Tok::Iri(iri) => {
                if let Some(id) = iri.strip_prefix(ENTITY_NS).filter(|id| is_entity_id(id)) {
                    PatternTerm::Entity(id.to_string())
                } else if let Some(id) = iri
                    .strip_prefix(PREDICATE_NS)
                    .filter(|id| is_predicate_id(id))
                {
                    PatternTerm::Predicate(id.to_string())
                } else {
                    return Err(self.unsupported("IRIs outside wd:/wdt: are not supported"));
                }
            }
            Tok::Str(s) => {
                let s = s.clone();
                self.advance();
                if matches!(self.peek().tok, Tok::LangTag(_)) {
                    return Err(self.unsupported("language-tagged literals are not supported"));
                }
                if self.at_punct('^') {
                    return Err(self.unsupported("typed literals are not supported"));
                }
                return self.check_position(&token, position, PatternTerm::Literal(s));
            }
            Tok::Num(n) => PatternTerm::Literal(n.clone()),
            Tok::Word(w) if w == "a" => {
                return Err(self.unsupported("rdf:type shorthand 'a' is not supported"))
            }
            Tok::Punct('^' | '(' | '!') if position == Position::Predicate => {
                return Err(self.unsupported("property paths are not supported"))
            }
            Tok::Punct('[') => return Err(self.unsupported("blank nodes are not supported")),
            Tok::Word(_) => {
                self.check_unsupported_keyword()?;
                return Err(self.syntax("expected a term"));
            }
            _ => return Err(self.syntax("expected a term")),
        };
        self.advance();
        self.check_position(&token, position, term)
    }

    fn check_position(
        &self,
        token: &Token,
        position: Position,
        term: PatternTerm,
    ) -> Result<PatternTerm, ParseError> {
        let ok = match (&term, position) {
            (PatternTerm::Var(_), _) => true,
            (PatternTerm::Predicate(_), Position::Predicate) => true,
            (_, Position::Predicate) => false,
            (PatternTerm::Entity(_), _) => true,
            (PatternTerm::Literal(_), Position::Object) => true,
            _ => false,
        };
        if ok {
            Ok(term)
        } else {
            Err(self.error_at(
                token,
                ParseErrorKind::SyntaxError,
                "term not allowed in this position",
            ))
        }
    }

    fn parse_modifiers(&mut self) -> Result<Option<u64>, ParseError> {
        let mut limit = None;
        loop {
            if self.peek().tok == Tok::Eof {
                return Ok(limit);
            }
            if self.at_keyword("LIMIT") && limit.is_none() {
                self.advance();
                let n = match &self.peek().tok {
                    Tok::Num(n) => n.parse::<u64>().ok().filter(|&n| n > 0),
                    _ => None,
                };
                match n {
                    Some(n) => {
                        self.advance();
                        limit = Some(n);
                    }
                    None => return Err(self.syntax("LIMIT expects a positive integer")),
                }
                continue;
            }
            self.check_unsupported_keyword()?;
            return Err(self.syntax("unexpected token after query"));
        }
    }

    fn validate(&self, ast: &QueryAst) -> Result<(), ParseError> {
        let bound: BTreeSet<&str> = ast.pattern_vars().into_iter().collect();
        let required: Vec<&str> = match &ast.form {
            QueryForm::Select { projection, .. } => projection.iter().map(String::as_str).collect(),
            QueryForm::Count { var, .. } => vec![var.as_str()],
            QueryForm::Ask => vec![],
        };
        for v in required {
            if !bound.contains(v) {
                return Err(ParseError {
                    kind: ParseErrorKind::SyntaxError,
                    token: format!("?{v}"),
                    offset: self.var_offsets.get(v).copied().unwrap_or(0),
                    message: format!("variable ?{v} is not bound by any pattern"),
                });
            }
        }
        for (i, p) in ast.patterns.iter().enumerate() {
            if p.terms().iter().all(|t| t.is_var()) {
                let shares = ast
                    .patterns
                    .iter()
                    .enumerate()
                    .any(|(j, other)| j != i && other.vars().any(|v| p.vars().any(|w| w == v)));
                if !shares {
                    let first = p.subject.var().unwrap_or_default();
                    return Err(ParseError {
                        kind: ParseErrorKind::UnsupportedConstruct,
                        token: format!("?{first}"),
                        offset: self.var_offsets.get(first).copied().unwrap_or(0),
                        message: "fully unconstrained triple pattern".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Parses a query in the supported subset.
pub fn parse(query: &str) -> Result<QueryAst, ParseError> {
    let tokens = lex(query)?;
    Parser {
        tokens,
        pos: 0,
        var_offsets: HashMap::new(),
    }
    .parse_query()
}
