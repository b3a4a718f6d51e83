//! The template catalog: parsing, validation, and rendering.
//!
//! A catalog is a stream of line-oriented documents:
//!
//! ```text
//! [template t1_P5185]
//! paradigm: property
//! output: single
//! linguality: mono
//! complexity: simple
//! reconstructed: yes
//! tag: word lemma
//! tag: language free_text
//! tag: language_code language_code
//! uses: P5185
//! variant: What is the gender of {word} in {language}?
//! population:
//!   SELECT ?word WHERE { ... } ORDER BY ?lexeme
//! body:
//!   SELECT ?lexeme ?qitem ?lemma ?qitemLabel
//!   ...
//! [end]
//! ```
//!
//! `[ask_rule tN]` documents carry the per-archetype rewrite rules used by
//! the generalization transform. Indented lines belong to the preceding
//! `population:` / `body:` block; `#` starts a comment outside blocks.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::check::{tokenize, Token, TokenKind};
use crate::hash::{hash_parts, pick_index};

/// What a tag stands for; drives escaping and population serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagKind {
    /// A lemma string, escaped for embedding inside single-quoted literals.
    Lemma,
    /// A lowercase language tag such as `de`.
    LanguageCode,
    /// A bare language item id such as `Q188` (bodies spell `wd:{tag}`).
    LanguageQid,
    /// A complete SPARQL term (`wd:Q499327`, `'text'@de`, ...).
    PropertyValue,
    /// Free text, escaped like a lemma.
    FreeText,
}

impl TagKind {
    pub fn name(self) -> &'static str {
        match self {
            TagKind::Lemma => "lemma",
            TagKind::LanguageCode => "language_code",
            TagKind::LanguageQid => "language_qid",
            TagKind::PropertyValue => "property_value",
            TagKind::FreeText => "free_text",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "lemma" => Some(TagKind::Lemma),
            "language_code" => Some(TagKind::LanguageCode),
            "language_qid" => Some(TagKind::LanguageQid),
            "property_value" => Some(TagKind::PropertyValue),
            "free_text" => Some(TagKind::FreeText),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tag {
    pub name: String,
    pub kind: TagKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Paradigm {
    Google,
    Property,
    MultiProperty,
    LanguageIndependent,
    RuleBased,
}

impl Paradigm {
    pub fn name(self) -> &'static str {
        match self {
            Paradigm::Google => "google",
            Paradigm::Property => "property",
            Paradigm::MultiProperty => "multi_property",
            Paradigm::LanguageIndependent => "language_independent",
            Paradigm::RuleBased => "rule_based",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "google" => Some(Paradigm::Google),
            "property" => Some(Paradigm::Property),
            "multi_property" => Some(Paradigm::MultiProperty),
            "language_independent" => Some(Paradigm::LanguageIndependent),
            "rule_based" => Some(Paradigm::RuleBased),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputArity {
    Single,
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linguality {
    Mono,
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Complexity {
    Simple,
    Complex,
}

/// The declared taxonomy profile of a template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimensionProfile {
    pub output_arity: OutputArity,
    pub linguality: Linguality,
    pub complexity: Complexity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerShape {
    Select,
    Ask,
}

/// A derivation of one tag's value from another's during population.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagDerivation {
    pub target: String,
    pub source: String,
    pub function: DeriveFn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeriveFn {
    Prefix1,
    Prefix2,
    Suffix1,
    Suffix2,
}

impl DeriveFn {
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "prefix1" => Some(DeriveFn::Prefix1),
            "prefix2" => Some(DeriveFn::Prefix2),
            "suffix1" => Some(DeriveFn::Suffix1),
            "suffix2" => Some(DeriveFn::Suffix2),
            _ => None,
        }
    }

    /// Applies the derivation; output is regex-escaped because derived values
    /// are only ever used as match patterns.
    pub fn apply(self, value: &str) -> String {
        let chars: Vec<char> = value.chars().collect();
        let taken: String = match self {
            DeriveFn::Prefix1 => chars.iter().take(1).collect(),
            DeriveFn::Prefix2 => chars.iter().take(2).collect(),
            DeriveFn::Suffix1 => {
                let n = chars.len().saturating_sub(1);
                chars[n..].iter().collect()
            }
            DeriveFn::Suffix2 => {
                let n = chars.len().saturating_sub(2);
                chars[n..].iter().collect()
            }
        };
        crate::exec::regexlite::escape_literal(&taken)
    }
}

/// One query template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSpec {
    pub id: String,
    pub paradigm: Paradigm,
    pub dimensions: DimensionProfile,
    pub tag_schema: Vec<Tag>,
    pub variants: Vec<String>,
    pub body: String,
    pub answer_shape: AnswerShape,
    pub properties_used: BTreeSet<String>,
    pub population_query: Option<String>,
    /// Explicit population-variable mappings (`tag=Var`).
    pub population_map: BTreeMap<String, String>,
    pub derivations: Vec<TagDerivation>,
    /// True when the body is a reconstruction rather than an attested text.
    pub reconstructed: bool,
    pub note: Option<String>,
}

impl TemplateSpec {
    pub fn tag(&self, name: &str) -> Option<&Tag> {
        self.tag_schema.iter().find(|t| t.name == name)
    }

    /// The archetype key (`t3`) of a property-family id like `ask_t3_P5187`.
    pub fn archetype(&self) -> Option<&str> {
        let id = self
            .id
            .strip_prefix("ask_")
            .or_else(|| self.id.strip_prefix("limit_"))
            .or_else(|| self.id.strip_prefix("order_"))
            .unwrap_or(&self.id);
        let (head, tail) = id.split_once('_')?;
        if head.len() >= 2
            && head.starts_with('t')
            && head[1..].chars().all(|c| c.is_ascii_digit())
            && tail.starts_with('P')
        {
            Some(head)
        } else {
            None
        }
    }
}

/// An utterance rewrite used by the generalization transform: utterances
/// starting with `prefix` become `template` with `{rest}` and `{answer}`
/// substituted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteRule {
    pub prefix: String,
    pub template: String,
}

/// Per-archetype recipe for turning a SELECT record into an ASK record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AskRule {
    pub archetype: String,
    /// The projected variable whose binding becomes the embedded answer.
    pub answer_var: String,
    pub rewrites: Vec<RewriteRule>,
    /// ASK body with `{word}`, `{language_code}`, `{pid}`, `{answer}` slots.
    pub body: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate template id {0}")]
    DuplicateId(String),
    #[error("template {id}: placeholder {{{tag}}} not in tag schema")]
    PlaceholderNotInSchema { id: String, tag: String },
    #[error("template {id}: body does not tokenize: {message}")]
    BodyTokenization { id: String, message: String },
    #[error("template {id}: unbalanced braces in body")]
    UnbalancedBraces { id: String },
    #[error("template {id}: body must start with {expected} to match its answer shape")]
    ShapeMismatch { id: String, expected: &'static str },
    #[error("template {id}: {message}")]
    Invalid { id: String, message: String },
    #[error("template {id}: declared {declared} but body references {count} lexical properties")]
    DimensionMismatch { id: String, declared: &'static str, count: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("missing binding for tag {{{0}}}")]
    MissingBinding(String),
    #[error("variant index {index} out of range ({count} variants)")]
    VariantOutOfRange { index: usize, count: usize },
    #[error("rendered text does not tokenize: {0}")]
    Untokenizable(String),
}

/// The loaded, validated template catalog plus its ASK rewrite rules.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    templates: BTreeMap<String, TemplateSpec>,
    ask_rules: BTreeMap<String, AskRule>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses one catalog document stream into the catalog. May be called
    /// once per file; duplicate ids are rejected across calls.
    pub fn add_documents(&mut self, text: &str) -> Result<(), CatalogError> {
        let mut lines = text.lines().enumerate().peekable();
        while let Some((idx, raw)) = lines.next() {
            let line = raw.trim_end();
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            if let Some(header) = trimmed.strip_prefix("[template ").and_then(|h| h.strip_suffix(']')) {
                let spec = parse_template(header.trim(), &mut lines, lineno)?;
                if self.templates.contains_key(&spec.id) {
                    return Err(CatalogError::DuplicateId(spec.id));
                }
                validate_template(&spec)?;
                self.templates.insert(spec.id.clone(), spec);
            } else if let Some(header) = trimmed.strip_prefix("[ask_rule ").and_then(|h| h.strip_suffix(']')) {
                let rule = parse_ask_rule(header.trim(), &mut lines, lineno)?;
                self.ask_rules.insert(rule.archetype.clone(), rule);
            } else {
                return Err(CatalogError::Parse {
                    line: lineno,
                    message: format!("expected [template ...] or [ask_rule ...], got {trimmed:?}"),
                });
            }
        }
        Ok(())
    }

    pub fn from_documents(text: &str) -> Result<Self, CatalogError> {
        let mut catalog = Catalog::new();
        catalog.add_documents(text)?;
        Ok(catalog)
    }

    pub fn template(&self, id: &str) -> Option<&TemplateSpec> {
        self.templates.get(id)
    }

    pub fn templates(&self) -> impl Iterator<Item = &TemplateSpec> {
        self.templates.values()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn ask_rule(&self, archetype: &str) -> Option<&AskRule> {
        self.ask_rules.get(archetype)
    }

    pub fn ask_rules(&self) -> impl Iterator<Item = &AskRule> {
        self.ask_rules.values()
    }

    pub fn paradigm_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut counts = BTreeMap::new();
        for spec in self.templates.values() {
            *counts.entry(spec.paradigm.name()).or_insert(0) += 1;
        }
        counts
    }
}

type Lines<'a> = core::iter::Peekable<core::iter::Enumerate<core::str::Lines<'a>>>;

fn collect_block(lines: &mut Lines<'_>) -> String {
    let mut block = String::new();
    while let Some(&(_, raw)) = lines.peek() {
        if let Some(content) = raw.strip_prefix("  ") {
            block.push_str(content.trim_end());
            block.push('\n');
            lines.next();
        } else if raw.trim().is_empty() {
            lines.next();
        } else {
            break;
        }
    }
    block.trim_end().to_owned()
}

fn parse_template(id: &str, lines: &mut Lines<'_>, header_line: usize) -> Result<TemplateSpec, CatalogError> {
    if id.is_empty() {
        return Err(CatalogError::Parse { line: header_line, message: "empty template id".to_owned() });
    }
    let mut paradigm = None;
    let mut output = None;
    let mut linguality = None;
    let mut complexity = None;
    let mut tags = Vec::new();
    let mut variants = Vec::new();
    let mut uses = BTreeSet::new();
    let mut body = None;
    let mut population = None;
    let mut map = BTreeMap::new();
    let mut derivations = Vec::new();
    let mut reconstructed = false;
    let mut note = None;
    let mut closed = false;

    while let Some((idx, raw)) = lines.next() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "[end]" {
            closed = true;
            break;
        }
        let err = |message: String| CatalogError::Parse { line: lineno, message };
        let (key, value) = line.split_once(':').ok_or_else(|| err(format!("expected key: value, got {line:?}")))?;
        let value = value.trim();
        match key {
            "paradigm" => paradigm = Some(Paradigm::parse(value).ok_or_else(|| err(format!("unknown paradigm {value:?}")))?),
            "output" => {
                output = Some(match value {
                    "single" => OutputArity::Single,
                    "multi" => OutputArity::Multi,
                    _ => return Err(err(format!("output must be single|multi, got {value:?}"))),
                })
            }
            "linguality" => {
                linguality = Some(match value {
                    "mono" => Linguality::Mono,
                    "multi" => Linguality::Multi,
                    _ => return Err(err(format!("linguality must be mono|multi, got {value:?}"))),
                })
            }
            "complexity" => {
                complexity = Some(match value {
                    "simple" => Complexity::Simple,
                    "complex" => Complexity::Complex,
                    _ => return Err(err(format!("complexity must be simple|complex, got {value:?}"))),
                })
            }
            "tag" => {
                let mut parts = value.split_whitespace();
                let name = parts.next().ok_or_else(|| err("tag needs a name".to_owned()))?;
                let kind = parts.next().ok_or_else(|| err("tag needs a kind".to_owned()))?;
                if !valid_tag_name(name) {
                    return Err(err(format!("bad tag name {name:?}")));
                }
                if tags.iter().any(|t: &Tag| t.name == name) {
                    return Err(err(format!("duplicate tag {name:?}")));
                }
                let kind = TagKind::parse(kind).ok_or_else(|| err(format!("unknown tag kind {kind:?}")))?;
                tags.push(Tag { name: name.to_owned(), kind });
            }
            "uses" => {
                for pid in value.split_whitespace() {
                    uses.insert(pid.to_owned());
                }
            }
            "variant" => variants.push(value.to_owned()),
            "map" => {
                let (tag, var) = value.split_once('=').ok_or_else(|| err("map needs tag=Var".to_owned()))?;
                map.insert(tag.trim().to_owned(), var.trim().to_owned());
            }
            "derive" => {
                let (target, rest) = value.split_once('=').ok_or_else(|| err("derive needs tag=src:fn".to_owned()))?;
                let (source, func) = rest.split_once(':').ok_or_else(|| err("derive needs tag=src:fn".to_owned()))?;
                let function = DeriveFn::parse(func.trim()).ok_or_else(|| err(format!("unknown derive fn {func:?}")))?;
                derivations.push(TagDerivation {
                    target: target.trim().to_owned(),
                    source: source.trim().to_owned(),
                    function,
                });
            }
            "reconstructed" => reconstructed = matches!(value, "yes" | "true"),
            "note" => note = Some(value.to_owned()),
            "population" => {
                if !value.is_empty() {
                    return Err(err("population block content belongs on indented lines".to_owned()));
                }
                population = Some(collect_block(lines));
            }
            "body" => {
                if !value.is_empty() {
                    return Err(err("body block content belongs on indented lines".to_owned()));
                }
                body = Some(collect_block(lines));
            }
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }
    if !closed {
        return Err(CatalogError::Parse { line: header_line, message: format!("[template {id}] missing [end]") });
    }

    let missing = |what: &str| CatalogError::Parse { line: header_line, message: format!("template {id}: missing {what}") };
    let body = body.ok_or_else(|| missing("body"))?;
    if variants.is_empty() {
        return Err(missing("variant"));
    }
    let answer_shape = detect_shape(&body).ok_or(CatalogError::ShapeMismatch {
        id: id.to_owned(),
        expected: "SELECT or ASK",
    })?;

    Ok(TemplateSpec {
        id: id.to_owned(),
        paradigm: paradigm.ok_or_else(|| missing("paradigm"))?,
        dimensions: DimensionProfile {
            output_arity: output.ok_or_else(|| missing("output"))?,
            linguality: linguality.ok_or_else(|| missing("linguality"))?,
            complexity: complexity.ok_or_else(|| missing("complexity"))?,
        },
        tag_schema: tags,
        variants,
        body,
        answer_shape,
        properties_used: uses,
        population_query: population,
        population_map: map,
        derivations,
        reconstructed,
        note,
    })
}

fn parse_ask_rule(archetype: &str, lines: &mut Lines<'_>, header_line: usize) -> Result<AskRule, CatalogError> {
    let mut answer_var = None;
    let mut rewrites = Vec::new();
    let mut body = None;
    let mut closed = false;
    while let Some((idx, raw)) = lines.next() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "[end]" {
            closed = true;
            break;
        }
        let err = |message: String| CatalogError::Parse { line: lineno, message };
        let (key, value) = line.split_once(':').ok_or_else(|| err(format!("expected key: value, got {line:?}")))?;
        let value = value.trim();
        match key {
            "answer_var" => answer_var = Some(value.to_owned()),
            "rewrite" => {
                let (prefix, template) = value
                    .split_once("=>")
                    .ok_or_else(|| err("rewrite needs `prefix => template`".to_owned()))?;
                rewrites.push(RewriteRule { prefix: prefix.trim().to_owned(), template: template.trim().to_owned() });
            }
            "body" => {
                if !value.is_empty() {
                    return Err(err("body block content belongs on indented lines".to_owned()));
                }
                body = Some(collect_block(lines));
            }
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }
    if !closed {
        return Err(CatalogError::Parse { line: header_line, message: format!("[ask_rule {archetype}] missing [end]") });
    }
    let missing = |what: &str| CatalogError::Parse {
        line: header_line,
        message: format!("ask_rule {archetype}: missing {what}"),
    };
    Ok(AskRule {
        archetype: archetype.to_owned(),
        answer_var: answer_var.ok_or_else(|| missing("answer_var"))?,
        rewrites,
        body: body.ok_or_else(|| missing("body"))?,
    })
}

fn valid_tag_name(name: &str) -> bool {
    let mut cs = name.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && cs.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn detect_shape(body: &str) -> Option<AnswerShape> {
    let tokens = tokenize(body);
    let first = tokens.first()?;
    if first.kind == TokenKind::Keyword {
        if first.text.eq_ignore_ascii_case("select") {
            return Some(AnswerShape::Select);
        }
        if first.text.eq_ignore_ascii_case("ask") {
            return Some(AnswerShape::Ask);
        }
    }
    None
}

/// Placeholders (`{name}`) occurring in `text`.
pub fn placeholders(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut rest = text;
    while let Some(pos) = rest.find('{') {
        let after = &rest[pos + 1..];
        match after.find('}').map(|end| &after[..end]) {
            Some(name) if valid_tag_name(name) => {
                out.insert(name.to_owned());
                rest = &after[name.len() + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

/// Distinct lexical-property references in a body: literal `wdt:P...`
/// mentions plus `wdt:{tag}` slots.
pub fn property_reference_count(body: &str) -> usize {
    let mut refs: BTreeSet<String> = BTreeSet::new();
    for token in tokenize(body) {
        if token.kind == TokenKind::PrefixedName {
            if let Some(local) = token.text.strip_prefix("wdt:") {
                let mut cs = local.chars();
                if cs.next() == Some('P') && local.len() > 1 && cs.all(|c| c.is_ascii_digit()) {
                    refs.insert(local.to_owned());
                }
            }
        }
    }
    let mut rest = body;
    while let Some(pos) = rest.find("wdt:{") {
        let after = &rest[pos + 5..];
        match after.find('}').map(|end| &after[..end]) {
            Some(name) if valid_tag_name(name) => {
                refs.insert(format!("{{{name}}}"));
                rest = &after[name.len() + 1..];
            }
            _ => rest = after,
        }
    }
    refs.len()
}

/// Dummy binding for validation renders, per tag kind.
fn dummy_value(kind: TagKind) -> &'static str {
    match kind {
        TagKind::Lemma => "placeholder",
        TagKind::LanguageCode => "en",
        TagKind::LanguageQid => "Q1860",
        TagKind::PropertyValue => "wd:Q1",
        TagKind::FreeText => "placeholder",
    }
}

fn validate_template(spec: &TemplateSpec) -> Result<(), CatalogError> {
    let schema: BTreeSet<&str> = spec.tag_schema.iter().map(|t| t.name.as_str()).collect();
    for source in spec.variants.iter().chain(core::iter::once(&spec.body)) {
        for tag in placeholders(source) {
            if !schema.contains(tag.as_str()) {
                return Err(CatalogError::PlaceholderNotInSchema { id: spec.id.clone(), tag });
            }
        }
    }

    // the body must tokenize cleanly once rendered with any complete binding
    let bindings: BTreeMap<String, String> = spec
        .tag_schema
        .iter()
        .map(|t| (t.name.clone(), dummy_value(t.kind).to_owned()))
        .collect();
    let rendered = substitute(&spec.body, &bindings, &spec.tag_schema, true)
        .map_err(|e| CatalogError::Invalid { id: spec.id.clone(), message: e.to_string() })?;
    let tokens = tokenize(&rendered);
    if let Some(bad) = tokens.iter().find(|t| t.kind == TokenKind::Error) {
        return Err(CatalogError::BodyTokenization { id: spec.id.clone(), message: format!("at {:?}", bad.text) });
    }
    if !braces_balanced(&tokens) {
        return Err(CatalogError::UnbalancedBraces { id: spec.id.clone() });
    }
    let leading = detect_shape(&rendered);
    match (spec.answer_shape, leading) {
        (AnswerShape::Select, Some(AnswerShape::Select)) | (AnswerShape::Ask, Some(AnswerShape::Ask)) => {}
        (AnswerShape::Select, _) => return Err(CatalogError::ShapeMismatch { id: spec.id.clone(), expected: "SELECT" }),
        (AnswerShape::Ask, _) => return Err(CatalogError::ShapeMismatch { id: spec.id.clone(), expected: "ASK" }),
    }

    // declared complexity versus lexical-property references: simple means at
    // most one, complex means two or more
    let count = property_reference_count(&spec.body);
    match spec.dimensions.complexity {
        Complexity::Simple if count > 1 => {
            return Err(CatalogError::DimensionMismatch { id: spec.id.clone(), declared: "simple", count })
        }
        Complexity::Complex if count < 2 => {
            return Err(CatalogError::DimensionMismatch { id: spec.id.clone(), declared: "complex", count })
        }
        _ => {}
    }

    // paradigm-specific structural requirements
    let body_upper = spec.body.to_uppercase();
    match spec.paradigm {
        Paradigm::LanguageIndependent => {
            if !spec.body.contains("FILTER(STR(?lemma) =") {
                return Err(CatalogError::Invalid {
                    id: spec.id.clone(),
                    message: "language-independent templates must match lemmas with FILTER(STR(?lemma) = ...)".to_owned(),
                });
            }
            if has_language_tagged_values(&spec.body) {
                return Err(CatalogError::Invalid {
                    id: spec.id.clone(),
                    message: "language-independent templates must not use language-tagged VALUES".to_owned(),
                });
            }
        }
        Paradigm::MultiProperty => {
            if !body_upper.contains("OPTIONAL") {
                return Err(CatalogError::Invalid {
                    id: spec.id.clone(),
                    message: "multi-property templates must use OPTIONAL".to_owned(),
                });
            }
        }
        Paradigm::RuleBased => {
            if !(body_upper.contains("LIMIT") || body_upper.contains("ORDER BY") || spec.body.contains("regex(")) {
                return Err(CatalogError::Invalid {
                    id: spec.id.clone(),
                    message: "rule-based templates must use LIMIT, ORDER BY or regex()".to_owned(),
                });
            }
        }
        _ => {}
    }
    Ok(())
}

fn braces_balanced(tokens: &[Token<'_>]) -> bool {
    let mut depth: i64 = 0;
    for t in tokens {
        match t.kind {
            TokenKind::BraceOpen => depth += 1,
            TokenKind::BraceClose => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            _ => {}
        }
    }
    depth == 0
}

fn has_language_tagged_values(body: &str) -> bool {
    let tokens = tokenize(body);
    let mut in_values = false;
    let mut depth_at_values = 0;
    let mut depth = 0;
    for t in &tokens {
        match t.kind {
            TokenKind::Keyword if t.text.eq_ignore_ascii_case("values") => {
                in_values = true;
                depth_at_values = depth;
            }
            TokenKind::BraceOpen => depth += 1,
            TokenKind::BraceClose => {
                depth -= 1;
                if in_values && depth == depth_at_values {
                    in_values = false;
                }
            }
            TokenKind::LanguageTag if in_values => return true,
            _ => {}
        }
    }
    // `'...'@{language_code}` renders to a language-tagged literal later
    body.contains("VALUES") && body.contains("'@{")
}

fn escape_literal_text(value: &str) -> String {
    value.replace('\\', "\\\\").replace('\'', "\\'")
}

/// Substitutes `{tag}` placeholders. Only names in the schema are treated as
/// placeholders; everything else (SPARQL braces) passes through.
fn substitute(
    text: &str,
    bindings: &BTreeMap<String, String>,
    schema: &[Tag],
    escape_by_kind: bool,
) -> Result<String, RenderError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let after = &rest[pos + 1..];
        let candidate = after.find('}').map(|end| &after[..end]);
        match candidate {
            Some(name) if valid_tag_name(name) && schema.iter().any(|t| t.name == name) => {
                let value = bindings.get(name).ok_or_else(|| RenderError::MissingBinding(name.to_owned()))?;
                let kind = schema.iter().find(|t| t.name == name).map(|t| t.kind).unwrap_or(TagKind::FreeText);
                if escape_by_kind && matches!(kind, TagKind::Lemma | TagKind::FreeText) {
                    out.push_str(&escape_literal_text(value));
                } else {
                    out.push_str(value);
                }
                rest = &after[name.len() + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Renders one utterance variant. All placeholders must be bound; the result
/// must contain no remaining placeholder syntax.
pub fn render_utterance(
    spec: &TemplateSpec,
    bindings: &BTreeMap<String, String>,
    variant_index: usize,
) -> Result<String, RenderError> {
    let variant = spec
        .variants
        .get(variant_index)
        .ok_or(RenderError::VariantOutOfRange { index: variant_index, count: spec.variants.len() })?;
    let rendered = substitute(variant, bindings, &spec.tag_schema, false)?;
    if let Some(tag) = placeholders(&rendered).into_iter().next() {
        return Err(RenderError::MissingBinding(tag));
    }
    Ok(rendered)
}

/// Renders the SPARQL body with escaping per tag kind, and verifies that the
/// result tokenizes without lexical errors.
pub fn render_query(spec: &TemplateSpec, bindings: &BTreeMap<String, String>) -> Result<String, RenderError> {
    let rendered = substitute(&spec.body, bindings, &spec.tag_schema, true)?;
    if let Some(bad) = tokenize(&rendered).iter().find(|t| t.kind == TokenKind::Error) {
        return Err(RenderError::Untokenizable(format!("at {:?}", bad.text)));
    }
    Ok(rendered)
}

/// Deterministic uniform variant choice keyed by (seed, record index).
pub fn pick_variant(spec: &TemplateSpec, seed: u64, record_index: u64) -> usize {
    if spec.variants.len() <= 1 {
        return 0;
    }
    pick_index(hash_parts(seed, &["variant"]), record_index, spec.variants.len())
}

/// Recomputes the taxonomy profile of a template, verifying the declared
/// complexity against the body's distinct lexical-property references.
pub fn dimension_profile_of(spec: &TemplateSpec) -> Result<DimensionProfile, CatalogError> {
    let count = property_reference_count(&spec.body);
    let consistent = match spec.dimensions.complexity {
        Complexity::Simple => count <= 1,
        Complexity::Complex => count >= 2,
    };
    if !consistent {
        return Err(CatalogError::DimensionMismatch {
            id: spec.id.clone(),
            declared: match spec.dimensions.complexity {
                Complexity::Simple => "simple",
                Complexity::Complex => "complex",
            },
            count,
        });
    }
    Ok(spec.dimensions)
}
