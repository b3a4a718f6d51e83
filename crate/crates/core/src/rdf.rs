//! RDF terms, the in-memory triple snapshot, and SPARQL result sets with
//! their standard JSON wire form.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An RDF term: an IRI or a literal (optionally language-tagged or typed).
/// Equality is structural on all fields.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RdfTerm {
    Iri(String),
    Literal {
        value: String,
        language: Option<String>,
        datatype: Option<String>,
    },
}

impl RdfTerm {
    pub fn iri(value: impl Into<String>) -> Self {
        RdfTerm::Iri(value.into())
    }

    pub fn literal(value: impl Into<String>) -> Self {
        RdfTerm::Literal { value: value.into(), language: None, datatype: None }
    }

    pub fn lang_literal(value: impl Into<String>, language: impl Into<String>) -> Self {
        RdfTerm::Literal { value: value.into(), language: Some(language.into()), datatype: None }
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, RdfTerm::Iri(_))
    }

    /// The string value: IRI text or literal value (SPARQL `STR()`).
    pub fn str_value(&self) -> &str {
        match self {
            RdfTerm::Iri(iri) => iri,
            RdfTerm::Literal { value, .. } => value,
        }
    }

    /// Last path segment of an IRI (`.../entity/Q42` -> `Q42`).
    pub fn local_name(&self) -> Option<&str> {
        match self {
            RdfTerm::Iri(iri) => iri.rsplit(|c| c == '/' || c == '#').next(),
            RdfTerm::Literal { .. } => None,
        }
    }

    /// Canonical text used for ordering, deduplication and row tie-breaks.
    pub fn canonical(&self) -> String {
        match self {
            RdfTerm::Iri(iri) => format!("<{iri}>"),
            RdfTerm::Literal { value, language, datatype } => {
                let mut out = format!("'{value}'");
                if let Some(lang) = language {
                    out.push('@');
                    out.push_str(lang);
                }
                if let Some(dt) = datatype {
                    out.push_str("^^<");
                    out.push_str(dt);
                    out.push('>');
                }
                out
            }
        }
    }
}

/// One solution: variable name to bound term. Unbound variables are absent.
pub type Row = BTreeMap<String, RdfTerm>;

pub fn canonical_row(row: &Row) -> String {
    let mut out = String::new();
    for (var, term) in row {
        out.push_str(var);
        out.push('=');
        out.push_str(&term.canonical());
        out.push('|');
    }
    out
}

/// Bindings of a SELECT query or the boolean of an ASK query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResultSet {
    Bindings { variables: Vec<String>, rows: Vec<Row> },
    Boolean(bool),
}

impl ResultSet {
    pub fn empty() -> Self {
        ResultSet::Bindings { variables: Vec::new(), rows: Vec::new() }
    }

    /// True for a non-empty bindings result or a true boolean.
    pub fn is_nonempty(&self) -> bool {
        match self {
            ResultSet::Bindings { rows, .. } => !rows.is_empty(),
            ResultSet::Boolean(b) => *b,
        }
    }

    pub fn row_count(&self) -> usize {
        match self {
            ResultSet::Bindings { rows, .. } => rows.len(),
            ResultSet::Boolean(_) => 0,
        }
    }

    /// Rows as canonical strings, sorted; used for order-insensitive
    /// multiset comparison in tests and oracles.
    pub fn canonical_rows(&self) -> Vec<String> {
        match self {
            ResultSet::Bindings { rows, .. } => {
                let mut out: Vec<String> = rows.iter().map(canonical_row).collect();
                out.sort();
                out
            }
            ResultSet::Boolean(b) => alloc::vec![format!("boolean={b}")],
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// An immutable set of triples plus an entity label table, standing in for a
/// live knowledge graph. Labels are derived from `rdfs:label` triples so the
/// two views cannot disagree.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    triples: Vec<(RdfTerm, RdfTerm, RdfTerm)>,
    labels: BTreeMap<(String, String), String>,
}

pub const RDFS_LABEL: &str = "http://www.w3.org/2000/01/rdf-schema#label";

impl Snapshot {
    pub fn from_triples(triples: Vec<(RdfTerm, RdfTerm, RdfTerm)>) -> Self {
        let mut labels = BTreeMap::new();
        for (s, p, o) in &triples {
            if let (RdfTerm::Iri(subject), RdfTerm::Iri(pred), RdfTerm::Literal { value, language, .. }) = (s, p, o) {
                if pred == RDFS_LABEL {
                    let lang = language.clone().unwrap_or_default();
                    labels.insert((subject.clone(), lang), value.clone());
                }
            }
        }
        Snapshot { triples, labels }
    }

    /// Parses the line-oriented snapshot format: `<s> <p> <o> .` per line,
    /// with object IRIs in angle brackets or literals as `'text'`,
    /// `'text'@lang` or `'text'^^<datatype>`. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, SnapshotError> {
        let mut triples = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let err = |message: String| SnapshotError::Parse { line: lineno, message };
            let body = line
                .strip_suffix('.')
                .map(str::trim_end)
                .ok_or_else(|| err("missing terminating '.'".to_string()))?;
            let (subject, rest) = parse_iri(body).map_err(|m| err(format!("subject: {m}")))?;
            let (predicate, rest) = parse_iri(rest.trim_start()).map_err(|m| err(format!("predicate: {m}")))?;
            let object = parse_object(rest.trim_start()).map_err(|m| err(format!("object: {m}")))?;
            triples.push((subject, predicate, object));
        }
        Ok(Snapshot::from_triples(triples))
    }

    pub fn triples(&self) -> &[(RdfTerm, RdfTerm, RdfTerm)] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn label(&self, entity_iri: &str, language: &str) -> Option<&str> {
        self.labels.get(&(entity_iri.to_owned(), language.to_owned())).map(String::as_str)
    }

    /// Every distinct term occurring in the snapshot.
    pub fn terms(&self) -> Vec<RdfTerm> {
        let mut set: alloc::collections::BTreeSet<RdfTerm> = alloc::collections::BTreeSet::new();
        for (s, p, o) in &self.triples {
            set.insert(s.clone());
            set.insert(p.clone());
            set.insert(o.clone());
        }
        set.into_iter().collect()
    }

    /// Serializes back to the line-oriented format.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (s, p, o) in &self.triples {
            out.push_str(&format!("{} {} {} .\n", serialize_term(s), serialize_term(p), serialize_term(o)));
        }
        out
    }
}

fn serialize_term(term: &RdfTerm) -> String {
    term.canonical()
}

fn parse_iri(input: &str) -> Result<(RdfTerm, &str), String> {
    let rest = input.strip_prefix('<').ok_or("expected '<'")?;
    let end = rest.find('>').ok_or("unterminated IRI")?;
    Ok((RdfTerm::Iri(rest[..end].to_owned()), &rest[end + 1..]))
}

fn parse_object(input: &str) -> Result<RdfTerm, String> {
    if input.starts_with('<') {
        let (term, rest) = parse_iri(input)?;
        if !rest.trim().is_empty() {
            return Err(format!("trailing content {rest:?}"));
        }
        return Ok(term);
    }
    let rest = input.strip_prefix('\'').ok_or("expected IRI or literal")?;
    // scan with backslash escapes
    let mut value = String::new();
    let mut chars = rest.char_indices();
    let mut end = None;
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => {
                let (_, esc) = chars.next().ok_or("dangling escape")?;
                value.push(esc);
            }
            '\'' => {
                end = Some(i + 1);
                break;
            }
            other => value.push(other),
        }
    }
    let end = end.ok_or("unterminated literal")?;
    let tail = rest[end..].trim();
    if tail.is_empty() {
        Ok(RdfTerm::literal(value))
    } else if let Some(lang) = tail.strip_prefix('@') {
        if lang.is_empty() || !lang.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return Err(format!("bad language tag {tail:?}"));
        }
        Ok(RdfTerm::lang_literal(value, lang))
    } else if let Some(dt) = tail.strip_prefix("^^") {
        let (term, left) = parse_iri(dt)?;
        if !left.trim().is_empty() {
            return Err("trailing content after datatype".to_string());
        }
        match term {
            RdfTerm::Iri(iri) => Ok(RdfTerm::Literal { value, language: None, datatype: Some(iri) }),
            _ => unreachable!(),
        }
    } else {
        Err(format!("unexpected trailing content {tail:?}"))
    }
}

// --- SPARQL results JSON (application/sparql-results+json) -----------------

#[derive(Serialize, Deserialize)]
struct JsonResults {
    head: JsonHead,
    #[serde(skip_serializing_if = "Option::is_none")]
    results: Option<JsonBindings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    boolean: Option<bool>,
}

#[derive(Serialize, Deserialize, Default)]
struct JsonHead {
    #[serde(skip_serializing_if = "Option::is_none")]
    vars: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct JsonBindings {
    bindings: Vec<BTreeMap<String, JsonTerm>>,
}

#[derive(Serialize, Deserialize)]
struct JsonTerm {
    #[serde(rename = "type")]
    kind: String,
    value: String,
    #[serde(rename = "xml:lang", skip_serializing_if = "Option::is_none")]
    language: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    datatype: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ResultsJsonError {
    #[error("malformed results document: {0}")]
    Malformed(String),
    #[error("results document has neither bindings nor boolean")]
    MissingBody,
    #[error("unsupported term type {0:?}")]
    UnsupportedTermType(String),
}

/// Encodes a result set as a standard SPARQL JSON results document, with the
/// field names the public query service emits.
pub fn results_to_json(results: &ResultSet) -> String {
    let doc = match results {
        ResultSet::Boolean(b) => JsonResults { head: JsonHead::default(), results: None, boolean: Some(*b) },
        ResultSet::Bindings { variables, rows } => {
            let bindings = rows
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|(var, term)| {
                            let json = match term {
                                RdfTerm::Iri(iri) => JsonTerm {
                                    kind: "uri".to_string(),
                                    value: iri.clone(),
                                    language: None,
                                    datatype: None,
                                },
                                RdfTerm::Literal { value, language, datatype } => JsonTerm {
                                    kind: "literal".to_string(),
                                    value: value.clone(),
                                    language: language.clone(),
                                    datatype: datatype.clone(),
                                },
                            };
                            (var.clone(), json)
                        })
                        .collect()
                })
                .collect();
            JsonResults {
                head: JsonHead { vars: Some(variables.clone()) },
                results: Some(JsonBindings { bindings }),
                boolean: None,
            }
        }
    };
    serde_json::to_string(&doc).expect("results serialization cannot fail")
}

/// Decodes a standard SPARQL JSON results document.
pub fn results_from_json(text: &str) -> Result<ResultSet, ResultsJsonError> {
    let doc: JsonResults =
        serde_json::from_str(text).map_err(|e| ResultsJsonError::Malformed(e.to_string()))?;
    if let Some(b) = doc.boolean {
        return Ok(ResultSet::Boolean(b));
    }
    let results = doc.results.ok_or(ResultsJsonError::MissingBody)?;
    let variables = doc.head.vars.unwrap_or_default();
    let mut rows = Vec::with_capacity(results.bindings.len());
    for binding in results.bindings {
        let mut row = Row::new();
        for (var, term) in binding {
            let term = match term.kind.as_str() {
                "uri" => RdfTerm::Iri(term.value),
                "literal" | "typed-literal" => RdfTerm::Literal {
                    value: term.value,
                    language: term.language,
                    datatype: term.datatype,
                },
                // the public service emits bnodes for some queries; our data
                // model has no use for them, map to an IRI-ish marker
                "bnode" => RdfTerm::Iri(format!("_:{}", term.value)),
                other => return Err(ResultsJsonError::UnsupportedTermType(other.to_owned())),
            };
            row.insert(var, term);
        }
        rows.push(row);
    }
    Ok(ResultSet::Bindings { variables, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn parse_snapshot_lines() {
        let text = "# a comment\n\
            <http://www.wikidata.org/entity/L1> <http://wikiba.se/ontology#lemma> 'Apfel'@de .\n\
            <http://www.wikidata.org/entity/L1> <http://www.wikidata.org/prop/direct/P5185> <http://www.wikidata.org/entity/Q499327> .\n\
            <http://www.wikidata.org/entity/Q499327> <http://www.w3.org/2000/01/rdf-schema#label> 'masculine'@en .\n";
        let snapshot = Snapshot::parse(text).unwrap();
        assert_eq!(snapshot.len(), 3);
        assert_eq!(snapshot.label("http://www.wikidata.org/entity/Q499327", "en"), Some("masculine"));
        assert_eq!(snapshot.label("http://www.wikidata.org/entity/Q499327", "de"), None);
    }

    #[test]
    fn parse_escaped_literal() {
        let text = r"<http://example.org/s> <http://example.org/p> 'l\'eau'@fr .";
        let snapshot = Snapshot::parse(text).unwrap();
        let (_, _, o) = &snapshot.triples()[0];
        assert_eq!(o, &RdfTerm::lang_literal("l'eau", "fr"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Snapshot::parse("<a> <b> <c> .\nnot a triple .").unwrap_err();
        match err {
            SnapshotError::Parse { line, .. } => assert_eq!(line, 2),
        }
    }

    #[test]
    fn serialize_round_trips() {
        let text = "<http://e/s> <http://e/p> 'x y'@en .\n<http://e/s> <http://e/p> <http://e/o> .\n";
        let snapshot = Snapshot::parse(text).unwrap();
        let again = Snapshot::parse(&snapshot.serialize()).unwrap();
        assert_eq!(snapshot.triples(), again.triples());
    }

    #[test]
    fn json_round_trip_bindings() {
        let rows = vec![
            [
                ("lexeme".to_string(), RdfTerm::iri("http://www.wikidata.org/entity/L1")),
                ("lemma".to_string(), RdfTerm::lang_literal("Apfel", "de")),
            ]
            .into_iter()
            .collect(),
        ];
        let rs = ResultSet::Bindings { variables: vec!["lexeme".into(), "lemma".into()], rows };
        let json = results_to_json(&rs);
        assert!(json.contains("\"head\""));
        assert!(json.contains("\"xml:lang\":\"de\""));
        assert_eq!(results_from_json(&json).unwrap(), rs);
    }

    #[test]
    fn json_round_trip_boolean() {
        let rs = ResultSet::Boolean(true);
        let json = results_to_json(&rs);
        assert_eq!(results_from_json(&json).unwrap(), rs);
        assert_eq!(results_from_json("{\"head\":{},\"boolean\":false}").unwrap(), ResultSet::Boolean(false));
    }

    #[test]
    fn json_malformed_is_an_error() {
        assert!(matches!(results_from_json("{"), Err(ResultsJsonError::Malformed(_))));
        assert!(matches!(results_from_json("{\"head\":{}}"), Err(ResultsJsonError::MissingBody)));
    }
}
