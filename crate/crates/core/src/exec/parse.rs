//! Recursive-descent parser for the supported SPARQL subset, over the token
//! stream of [`crate::check::tokenize`].

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::check::{tokenize, Token, TokenKind};
use crate::rdf::RdfTerm;

use super::ExecError;

/// Built-in prefix table matching the public query service's defaults for the
/// vocabularies this toolkit touches.
pub const PREFIXES: &[(&str, &str)] = &[
    ("wd", "http://www.wikidata.org/entity/"),
    ("wdt", "http://www.wikidata.org/prop/direct/"),
    ("wikibase", "http://wikiba.se/ontology#"),
    ("ontolex", "http://www.w3.org/ns/lemon/ontolex#"),
    ("dct", "http://purl.org/dc/terms/"),
    ("rdfs", "http://www.w3.org/2000/01/rdf-schema#"),
    ("skos", "http://www.w3.org/2004/02/skos/core#"),
    ("rdf", "http://www.w3.org/1999/02/22-rdf-syntax-ns#"),
    ("xsd", "http://www.w3.org/2001/XMLSchema#"),
    ("schema", "http://schema.org/"),
    ("bd", "http://www.bigdata.com/rdf#"),
    ("p", "http://www.wikidata.org/prop/"),
    ("ps", "http://www.wikidata.org/prop/statement/"),
    ("pq", "http://www.wikidata.org/prop/qualifier/"),
];

pub fn expand_prefixed(name: &str) -> Option<String> {
    let (prefix, local) = name.split_once(':')?;
    PREFIXES
        .iter()
        .find(|(p, _)| *p == prefix)
        .map(|(_, ns)| format!("{ns}{local}"))
}

/// Shortens an IRI to a prefixed name when a known namespace matches.
pub fn compact_iri(iri: &str) -> Option<String> {
    for (prefix, ns) in PREFIXES {
        if let Some(local) = iri.strip_prefix(ns) {
            if !local.is_empty() && local.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-') {
                return Some(format!("{prefix}:{local}"));
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternTerm {
    Var(String),
    Term(RdfTerm),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StrExpr {
    /// `STR(?v)` — the plain string value of whatever `?v` binds to.
    Str(String),
    /// Bare `?v`.
    Var(String),
}

impl StrExpr {
    pub fn var(&self) -> &str {
        match self {
            StrExpr::Str(v) | StrExpr::Var(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    /// `STR(?v) = 'text'` or `?v = 'text'`.
    Eq { expr: StrExpr, value: String },
    /// `regex(STR(?v), 'pattern' [, 'flags'])`.
    Regex { expr: StrExpr, pattern: String, flags: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Element {
    Pattern(TriplePattern),
    Values { var: String, terms: Vec<RdfTerm> },
    Filter(Constraint),
    Optional(Group),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Group {
    pub elements: Vec<Element>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryForm {
    Select,
    Ask,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Projection {
    Star,
    Vars(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OrderExpr {
    Var(String),
    StrLen(StrExpr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderKey {
    pub expr: OrderExpr,
    pub descending: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub form: QueryForm,
    pub distinct: bool,
    pub projection: Projection,
    pub group: Group,
    pub order: Vec<OrderKey>,
    pub limit: Option<usize>,
    pub offset: Option<usize>,
    /// Language argument of the label-service block, when present.
    pub label_language: Option<String>,
}

struct Parser<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
}

type PResult<T> = Result<T, ExecError>;

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token<'a>> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn offset(&self) -> usize {
        self.peek().map(|t| t.offset).unwrap_or(usize::MAX)
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(ExecError::Parse { offset: self.offset(), message: message.into() })
    }

    fn at_keyword(&self, word: &str) -> bool {
        matches!(self.peek(), Some(t) if t.kind == TokenKind::Keyword && t.text.eq_ignore_ascii_case(word))
    }

    fn eat_keyword(&mut self, word: &str) -> bool {
        if self.at_keyword(word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, word: &str) -> PResult<()> {
        if self.eat_keyword(word) {
            Ok(())
        } else {
            self.err(format!("expected {word}"))
        }
    }

    fn at_punct(&self, text: &str) -> bool {
        matches!(self.peek(), Some(t) if t.kind == TokenKind::Punctuation && t.text == text)
    }

    fn eat_punct(&mut self, text: &str) -> bool {
        if self.at_punct(text) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn at_kind(&self, kind: TokenKind) -> bool {
        matches!(self.peek(), Some(t) if t.kind == kind)
    }

    fn eat_kind(&mut self, kind: TokenKind) -> Option<Token<'a>> {
        if self.at_kind(kind) {
            self.next()
        } else {
            None
        }
    }

    fn expect_kind(&mut self, kind: TokenKind, what: &str) -> PResult<Token<'a>> {
        self.eat_kind(kind).map_or_else(|| self.err(format!("expected {what}")), Ok)
    }

    fn expect_paren(&mut self, text: &str) -> PResult<()> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Paren && t.text == text => {
                self.pos += 1;
                Ok(())
            }
            _ => self.err(format!("expected '{text}'")),
        }
    }

    fn parse_query(&mut self) -> PResult<Query> {
        if let Some(t) = self.peek() {
            if t.kind == TokenKind::Error {
                return self.err(format!("lexical error at {:?}", t.text));
            }
        }
        for unsupported in ["prefix", "construct", "describe", "insert", "delete", "base"] {
            if self.at_keyword(unsupported) {
                return Err(ExecError::Unsupported(unsupported.to_owned()));
            }
        }
        let query = if self.eat_keyword("select") {
            self.parse_select()?
        } else if self.eat_keyword("ask") {
            self.parse_ask()?
        } else {
            return self.err("expected SELECT or ASK");
        };
        if let Some(t) = self.peek() {
            return self.err(format!("unexpected trailing {:?}", t.text));
        }
        Ok(query)
    }

    fn parse_select(&mut self) -> PResult<Query> {
        let distinct = self.eat_keyword("distinct");
        if self.at_keyword("reduced") {
            return Err(ExecError::Unsupported("REDUCED".to_owned()));
        }
        let projection = if self.eat_punct("*") {
            Projection::Star
        } else {
            let mut vars = Vec::new();
            loop {
                if let Some(var) = self.eat_kind(TokenKind::Variable) {
                    vars.push(var.text[1..].to_owned());
                } else if self.at_kind(TokenKind::Paren) {
                    return Err(ExecError::Unsupported("projection expression".to_owned()));
                } else {
                    break;
                }
            }
            if vars.is_empty() {
                return self.err("SELECT projects no variables");
            }
            Projection::Vars(vars)
        };
        self.eat_keyword("where");
        let (group, label_language) = self.parse_group(true)?;
        let (order, limit, offset) = self.parse_modifiers()?;
        Ok(Query { form: QueryForm::Select, distinct, projection, group, order, limit, offset, label_language })
    }

    fn parse_ask(&mut self) -> PResult<Query> {
        self.eat_keyword("where");
        let (group, label_language) = self.parse_group(true)?;
        let (order, limit, offset) = self.parse_modifiers()?;
        Ok(Query {
            form: QueryForm::Ask,
            distinct: false,
            projection: Projection::Star,
            group,
            order,
            limit,
            offset,
            label_language,
        })
    }

    /// Parses `{ ... }`. The label-service block is only legal at the top
    /// level; its language argument is returned separately.
    fn parse_group(&mut self, top_level: bool) -> PResult<(Group, Option<String>)> {
        if !self.at_kind(TokenKind::BraceOpen) {
            return self.err("expected '{'");
        }
        self.pos += 1;
        let mut elements = Vec::new();
        let mut label_language = None;
        loop {
            match self.peek() {
                None => return self.err("unterminated group"),
                Some(t) if t.kind == TokenKind::BraceClose => {
                    self.pos += 1;
                    break;
                }
                Some(t) if t.kind == TokenKind::Error => {
                    let text = t.text.to_owned();
                    return self.err(format!("lexical error at {text:?}"));
                }
                _ => {}
            }
            if self.eat_punct(".") || self.eat_punct(";") {
                continue;
            }
            if self.at_keyword("values") {
                self.pos += 1;
                elements.push(self.parse_values()?);
            } else if self.at_keyword("filter") {
                self.pos += 1;
                elements.push(Element::Filter(self.parse_constraint()?));
            } else if self.at_keyword("optional") {
                self.pos += 1;
                let (inner, service) = self.parse_group(false)?;
                if service.is_some() {
                    return Err(ExecError::Unsupported("label service inside OPTIONAL".to_owned()));
                }
                elements.push(Element::Optional(inner));
            } else if self.at_keyword("service") {
                self.pos += 1;
                if !top_level {
                    return Err(ExecError::Unsupported("nested SERVICE".to_owned()));
                }
                if label_language.is_some() {
                    return Err(ExecError::Unsupported("multiple SERVICE blocks".to_owned()));
                }
                label_language = Some(self.parse_label_service()?);
            } else if self.at_keyword("select") {
                return Err(ExecError::Unsupported("subquery".to_owned()));
            } else if self.at_keyword("union") || self.at_keyword("minus") || self.at_keyword("graph")
                || self.at_keyword("bind") || self.at_keyword("not") || self.at_keyword("exists")
            {
                let feature = self.peek().map(|t| t.text.to_uppercase()).unwrap_or_default();
                return Err(ExecError::Unsupported(feature));
            } else if self.at_kind(TokenKind::BraceOpen) {
                return Err(ExecError::Unsupported("nested group".to_owned()));
            } else {
                self.parse_triples_same_subject(&mut elements)?;
            }
        }
        Ok((Group { elements }, label_language))
    }

    fn parse_values(&mut self) -> PResult<Element> {
        if self.at_kind(TokenKind::Paren) {
            return Err(ExecError::Unsupported("multi-variable VALUES".to_owned()));
        }
        let var = self.expect_kind(TokenKind::Variable, "variable after VALUES")?.text[1..].to_owned();
        if !self.at_kind(TokenKind::BraceOpen) {
            return self.err("expected '{' after VALUES variable");
        }
        self.pos += 1;
        let mut terms = Vec::new();
        loop {
            match self.peek() {
                None => return self.err("unterminated VALUES block"),
                Some(t) if t.kind == TokenKind::BraceClose => {
                    self.pos += 1;
                    break;
                }
                _ => {}
            }
            match self.parse_term()? {
                PatternTerm::Term(term) => terms.push(term),
                PatternTerm::Var(_) => return self.err("variable inside VALUES data"),
            }
        }
        Ok(Element::Values { var, terms })
    }

    fn parse_label_service(&mut self) -> PResult<String> {
        let name = self.expect_kind(TokenKind::PrefixedName, "service name")?;
        if !name.text.eq_ignore_ascii_case("wikibase:label") {
            return Err(ExecError::Unsupported(format!("SERVICE {}", name.text)));
        }
        if !self.at_kind(TokenKind::BraceOpen) {
            return self.err("expected '{' after service name");
        }
        self.pos += 1;
        let param = self.expect_kind(TokenKind::PrefixedName, "bd:serviceParam")?;
        if !param.text.eq_ignore_ascii_case("bd:serviceParam") {
            return Err(ExecError::Unsupported(format!("service parameter {}", param.text)));
        }
        let pred = self.expect_kind(TokenKind::PrefixedName, "wikibase:language")?;
        if !pred.text.eq_ignore_ascii_case("wikibase:language") {
            return Err(ExecError::Unsupported(format!("service parameter {}", pred.text)));
        }
        let lang = self.expect_kind(TokenKind::Literal, "language literal")?;
        let language = unquote(lang.text);
        self.eat_punct(".");
        if !self.at_kind(TokenKind::BraceClose) {
            return self.err("expected '}' closing service block");
        }
        self.pos += 1;
        // language lists like 'en,de' fall back to their first entry
        Ok(language.split(',').next().unwrap_or("en").trim().to_owned())
    }

    fn parse_constraint(&mut self) -> PResult<Constraint> {
        self.expect_paren("(")?;
        let constraint = if self.eat_keyword("regex") {
            self.expect_paren("(")?;
            let expr = self.parse_str_expr()?;
            if !self.eat_punct(",") {
                return self.err("expected ',' in regex()");
            }
            let pattern = unquote(self.expect_kind(TokenKind::Literal, "regex pattern")?.text);
            let flags = if self.eat_punct(",") {
                unquote(self.expect_kind(TokenKind::Literal, "regex flags")?.text)
            } else {
                String::new()
            };
            self.expect_paren(")")?;
            Constraint::Regex { expr, pattern, flags }
        } else {
            let expr = self.parse_str_expr()?;
            if !self.eat_punct("=") {
                return Err(ExecError::Unsupported("filter operator".to_owned()));
            }
            let value = unquote(self.expect_kind(TokenKind::Literal, "comparison literal")?.text);
            // a language-tagged comparison literal compares by string value
            self.eat_kind(TokenKind::LanguageTag);
            Constraint::Eq { expr, value }
        };
        self.expect_paren(")")?;
        Ok(constraint)
    }

    fn parse_str_expr(&mut self) -> PResult<StrExpr> {
        if self.eat_keyword("str") {
            self.expect_paren("(")?;
            let var = self.expect_kind(TokenKind::Variable, "variable in STR()")?.text[1..].to_owned();
            self.expect_paren(")")?;
            Ok(StrExpr::Str(var))
        } else if let Some(var) = self.eat_kind(TokenKind::Variable) {
            Ok(StrExpr::Var(var.text[1..].to_owned()))
        } else if self.at_kind(TokenKind::Keyword) {
            let feature = self.peek().map(|t| t.text.to_uppercase()).unwrap_or_default();
            Err(ExecError::Unsupported(format!("filter function {feature}")))
        } else {
            self.err("expected STR(?var) or ?var")
        }
    }

    fn parse_triples_same_subject(&mut self, elements: &mut Vec<Element>) -> PResult<()> {
        let subject = self.parse_term()?;
        loop {
            let predicate = self.parse_predicate()?;
            loop {
                let object = self.parse_term()?;
                elements.push(Element::Pattern(TriplePattern {
                    subject: subject.clone(),
                    predicate: predicate.clone(),
                    object,
                }));
                if !self.eat_punct(",") {
                    break;
                }
            }
            if self.eat_punct(";") {
                // a dangling ';' before '.' or '}' is legal
                if self.at_punct(".") || self.at_kind(TokenKind::BraceClose) {
                    self.eat_punct(".");
                    return Ok(());
                }
                continue;
            }
            self.eat_punct(".");
            return Ok(());
        }
    }

    fn parse_predicate(&mut self) -> PResult<PatternTerm> {
        // `a` abbreviates rdf:type
        if let Some(t) = self.peek() {
            if t.kind == TokenKind::Other && t.text == "a" {
                self.pos += 1;
                return Ok(PatternTerm::Term(RdfTerm::iri("http://www.w3.org/1999/02/22-rdf-syntax-ns#type")));
            }
        }
        let term = self.parse_term()?;
        if self.at_punct("/") || self.at_punct("|") || self.at_punct("^") || self.at_punct("+") || self.at_punct("*") {
            return Err(ExecError::Unsupported("property path".to_owned()));
        }
        Ok(term)
    }

    fn parse_term(&mut self) -> PResult<PatternTerm> {
        let token = match self.next() {
            Some(t) => t,
            None => return self.err("expected a term"),
        };
        match token.kind {
            TokenKind::Variable => Ok(PatternTerm::Var(token.text[1..].to_owned())),
            TokenKind::Iri => Ok(PatternTerm::Term(RdfTerm::iri(
                token.text.trim_start_matches('<').trim_end_matches('>'),
            ))),
            TokenKind::PrefixedName => match expand_prefixed(token.text) {
                Some(iri) => Ok(PatternTerm::Term(RdfTerm::iri(iri))),
                None => Err(ExecError::Unsupported(format!("unknown prefix in {}", token.text))),
            },
            TokenKind::Literal => {
                let value = unquote(token.text);
                if let Some(tag) = self.eat_kind(TokenKind::LanguageTag) {
                    Ok(PatternTerm::Term(RdfTerm::lang_literal(value, &tag.text[1..])))
                } else if self.at_punct("^") {
                    // ^^datatype
                    self.pos += 1;
                    if !self.eat_punct("^") {
                        return self.err("expected '^^'");
                    }
                    let dt = match self.next() {
                        Some(t) if t.kind == TokenKind::Iri => t.text.trim_start_matches('<').trim_end_matches('>').to_owned(),
                        Some(t) if t.kind == TokenKind::PrefixedName => expand_prefixed(t.text)
                            .ok_or_else(|| ExecError::Unsupported(format!("unknown prefix in {}", t.text)))?,
                        _ => return self.err("expected datatype IRI"),
                    };
                    Ok(PatternTerm::Term(RdfTerm::Literal { value, language: None, datatype: Some(dt) }))
                } else {
                    Ok(PatternTerm::Term(RdfTerm::literal(value)))
                }
            }
            TokenKind::Other if token.text.chars().all(|c| c.is_ascii_digit()) => {
                Ok(PatternTerm::Term(RdfTerm::Literal {
                    value: token.text.to_owned(),
                    language: None,
                    datatype: Some("http://www.w3.org/2001/XMLSchema#integer".to_owned()),
                }))
            }
            TokenKind::Error => {
                self.pos -= 1;
                self.err(format!("lexical error at {:?}", token.text))
            }
            _ => {
                self.pos -= 1;
                self.err(format!("unexpected {:?}", token.text))
            }
        }
    }

    fn parse_modifiers(&mut self) -> PResult<(Vec<OrderKey>, Option<usize>, Option<usize>)> {
        let mut order = Vec::new();
        if self.eat_keyword("order") {
            self.expect_keyword("by")?;
            loop {
                if let Some(key) = self.parse_order_key()? {
                    order.push(key);
                } else {
                    break;
                }
            }
            if order.is_empty() {
                return self.err("ORDER BY without keys");
            }
        }
        if self.at_keyword("group") || self.at_keyword("having") {
            let feature = self.peek().map(|t| t.text.to_uppercase()).unwrap_or_default();
            return Err(ExecError::Unsupported(feature));
        }
        let mut limit = None;
        let mut offset = None;
        for _ in 0..2 {
            if self.eat_keyword("limit") {
                limit = Some(self.parse_integer()?);
            } else if self.eat_keyword("offset") {
                offset = Some(self.parse_integer()?);
            }
        }
        Ok((order, limit, offset))
    }

    fn parse_order_key(&mut self) -> PResult<Option<OrderKey>> {
        if let Some(var) = self.eat_kind(TokenKind::Variable) {
            return Ok(Some(OrderKey { expr: OrderExpr::Var(var.text[1..].to_owned()), descending: false }));
        }
        let descending = if self.at_keyword("desc") {
            self.pos += 1;
            true
        } else if self.at_keyword("asc") {
            self.pos += 1;
            false
        } else if self.at_keyword("strlen") {
            self.pos += 1;
            let expr = self.parse_strlen_body()?;
            return Ok(Some(OrderKey { expr, descending: false }));
        } else {
            return Ok(None);
        };
        self.expect_paren("(")?;
        let expr = if self.eat_keyword("strlen") {
            self.parse_strlen_body()?
        } else if let Some(var) = self.eat_kind(TokenKind::Variable) {
            OrderExpr::Var(var.text[1..].to_owned())
        } else {
            return self.err("expected ?var or STRLEN(...) in order key");
        };
        self.expect_paren(")")?;
        Ok(Some(OrderKey { expr, descending }))
    }

    fn parse_strlen_body(&mut self) -> PResult<OrderExpr> {
        self.expect_paren("(")?;
        let inner = self.parse_str_expr()?;
        self.expect_paren(")")?;
        Ok(OrderExpr::StrLen(inner))
    }

    fn parse_integer(&mut self) -> PResult<usize> {
        let t = self.expect_kind(TokenKind::Other, "an integer")?;
        t.text.parse::<usize>().map_or_else(|_| self.err(format!("bad integer {:?}", t.text)), Ok)
    }
}

fn unquote(text: &str) -> String {
    let inner = if (text.starts_with('\'') && text.ends_with('\'') && text.len() >= 2)
        || (text.starts_with('"') && text.ends_with('"') && text.len() >= 2)
    {
        &text[1..text.len() - 1]
    } else {
        text
    };
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some(other) => out.push(other),
                None => {}
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Parses query text into the supported-subset AST.
pub fn parse_query(text: &str) -> Result<Query, ExecError> {
    let tokens = tokenize(text);
    let mut parser = Parser { tokens, pos: 0 };
    parser.parse_query()
}

/// All variables mentioned in the group, in first-mention order.
pub fn group_variables(group: &Group) -> Vec<String> {
    let mut seen = Vec::new();
    fn push(seen: &mut Vec<String>, var: &str) {
        if !seen.iter().any(|v| v == var) {
            seen.push(var.to_owned());
        }
    }
    fn walk(group: &Group, seen: &mut Vec<String>) {
        for element in &group.elements {
            match element {
                Element::Pattern(p) => {
                    for term in [&p.subject, &p.predicate, &p.object] {
                        if let PatternTerm::Var(v) = term {
                            push(seen, v);
                        }
                    }
                }
                Element::Values { var, .. } => push(seen, var),
                Element::Filter(_) => {}
                Element::Optional(inner) => walk(inner, seen),
            }
        }
    }
    walk(group, &mut seen);
    seen
}
