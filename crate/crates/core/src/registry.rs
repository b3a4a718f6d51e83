//! Reference data: the classified lexicographic properties, the language
//! table, and the multi-property population pool.
//!
//! All three load from small CSV files and are immutable after load; see the
//! shipped `data/registry.csv`, `data/languages.csv` and `data/pool.csv`.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

/// The seven property categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PropertyCategory {
    Linguistic,
    Historical,
    Syntactic,
    Semantic,
    OrthographicPhonetic,
    Translation,
    Stylistic,
}

impl PropertyCategory {
    pub const ALL: [PropertyCategory; 7] = [
        PropertyCategory::Linguistic,
        PropertyCategory::Historical,
        PropertyCategory::Syntactic,
        PropertyCategory::Semantic,
        PropertyCategory::OrthographicPhonetic,
        PropertyCategory::Translation,
        PropertyCategory::Stylistic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PropertyCategory::Linguistic => "Linguistic",
            PropertyCategory::Historical => "Historical",
            PropertyCategory::Syntactic => "Syntactic",
            PropertyCategory::Semantic => "Semantic",
            PropertyCategory::OrthographicPhonetic => "OrthographicPhonetic",
            PropertyCategory::Translation => "Translation",
            PropertyCategory::Stylistic => "Stylistic",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == text)
    }
}

/// Where on the lexeme model a property attaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Attachment {
    Lexeme,
    Sense,
    Form,
}

impl Attachment {
    pub fn name(self) -> &'static str {
        match self {
            Attachment::Lexeme => "lexeme",
            Attachment::Sense => "sense",
            Attachment::Form => "form",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "lexeme" => Some(Attachment::Lexeme),
            "sense" => Some(Attachment::Sense),
            "form" => Some(Attachment::Form),
            _ => None,
        }
    }
}

/// The value type of a property's range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RangeKind {
    String,
    QItem,
    Lexeme,
    MonolingualText,
    Sense,
    Form,
}

impl RangeKind {
    pub fn name(self) -> &'static str {
        match self {
            RangeKind::String => "string",
            RangeKind::QItem => "q_item",
            RangeKind::Lexeme => "lexeme",
            RangeKind::MonolingualText => "monolingual_text",
            RangeKind::Sense => "sense",
            RangeKind::Form => "form",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "string" => Some(RangeKind::String),
            "q_item" => Some(RangeKind::QItem),
            "lexeme" => Some(RangeKind::Lexeme),
            "monolingual_text" => Some(RangeKind::MonolingualText),
            "sense" => Some(RangeKind::Sense),
            "form" => Some(RangeKind::Form),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyDescriptor {
    pub pid: String,
    pub label: String,
    pub category: PropertyCategory,
    pub attachment: Attachment,
    pub range_kind: RangeKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageRef {
    pub qid: String,
    pub code: String,
    pub label: String,
}

/// An entry of the multi-property population pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolProperty {
    pub pid: String,
    pub label: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate property {pid}")]
    DuplicatePid { line: usize, pid: String },
    #[error("line {line}: unknown category {label:?}")]
    UnknownCategory { line: usize, label: String },
    #[error("unknown property {0}")]
    UnknownProperty(String),
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    properties: BTreeMap<String, PropertyDescriptor>,
    languages: Vec<LanguageRef>,
    pool: Vec<PoolProperty>,
}

fn is_pid(text: &str) -> bool {
    let mut cs = text.chars();
    cs.next() == Some('P') && text.len() > 1 && cs.all(|c| c.is_ascii_digit())
}

fn is_qid(text: &str) -> bool {
    let mut cs = text.chars();
    cs.next() == Some('Q') && text.len() > 1 && cs.all(|c| c.is_ascii_digit())
}

impl Registry {
    /// Loads the property classification from CSV with header
    /// `pid,label,category,attachment,range_kind`.
    pub fn load(csv: &str) -> Result<Self, RegistryError> {
        let mut registry = Registry::default();
        registry.load_properties(csv)?;
        Ok(registry)
    }

    fn load_properties(&mut self, csv: &str) -> Result<(), RegistryError> {
        for (line, fields) in csv_records(csv, 5, "pid,label,category,attachment,range_kind")? {
            let err = |message: String| RegistryError::Parse { line, message };
            let [pid, label, category, attachment, range_kind] = fields;
            if !is_pid(&pid) {
                return Err(err(format!("bad property id {pid:?}")));
            }
            let category = PropertyCategory::parse(&category)
                .ok_or(RegistryError::UnknownCategory { line, label: category.clone() })?;
            let attachment = Attachment::parse(&attachment).ok_or_else(|| err(format!("bad attachment {attachment:?}")))?;
            let range_kind = RangeKind::parse(&range_kind).ok_or_else(|| err(format!("bad range kind {range_kind:?}")))?;
            if self.properties.contains_key(&pid) {
                return Err(RegistryError::DuplicatePid { line, pid });
            }
            self.properties.insert(pid.clone(), PropertyDescriptor { pid, label, category, attachment, range_kind });
        }
        Ok(())
    }

    /// Loads the language table from CSV with header `qid,code,label`.
    pub fn load_languages(&mut self, csv: &str) -> Result<(), RegistryError> {
        for (line, fields) in csv_records(csv, 3, "qid,code,label")? {
            let err = |message: String| RegistryError::Parse { line, message };
            let [qid, code, label] = fields;
            if !is_qid(&qid) {
                return Err(err(format!("bad item id {qid:?}")));
            }
            if code.is_empty() || code.chars().any(|c| c.is_ascii_uppercase()) {
                return Err(err(format!("language code must be non-empty lowercase, got {code:?}")));
            }
            if self.languages.iter().any(|l| l.qid == qid || l.code == code) {
                return Err(err(format!("duplicate language {qid}/{code}")));
            }
            self.languages.push(LanguageRef { qid, code, label });
        }
        Ok(())
    }

    /// Loads the multi-property pool from CSV with header `pid,label`.
    pub fn load_pool(&mut self, csv: &str) -> Result<(), RegistryError> {
        for (line, fields) in csv_records(csv, 2, "pid,label")? {
            let [pid, label] = fields;
            if !is_pid(&pid) {
                return Err(RegistryError::Parse { line, message: format!("bad property id {pid:?}") });
            }
            if self.pool.iter().any(|p| p.pid == pid) {
                return Err(RegistryError::DuplicatePid { line, pid });
            }
            self.pool.push(PoolProperty { pid, label });
        }
        Ok(())
    }

    pub fn property(&self, pid: &str) -> Option<&PropertyDescriptor> {
        self.properties.get(pid)
    }

    /// The category of `pid`; total over registered properties, an error
    /// otherwise.
    pub fn classify_property(&self, pid: &str) -> Result<PropertyCategory, RegistryError> {
        self.properties
            .get(pid)
            .map(|d| d.category)
            .ok_or_else(|| RegistryError::UnknownProperty(pid.to_owned()))
    }

    pub fn properties(&self) -> impl Iterator<Item = &PropertyDescriptor> {
        self.properties.values()
    }

    pub fn property_count(&self) -> usize {
        self.properties.len()
    }

    pub fn languages(&self) -> &[LanguageRef] {
        &self.languages
    }

    pub fn language_by_code(&self, code: &str) -> Option<&LanguageRef> {
        self.languages.iter().find(|l| l.code == code)
    }

    pub fn language_by_qid(&self, qid: &str) -> Option<&LanguageRef> {
        self.languages.iter().find(|l| l.qid == qid)
    }

    pub fn pool(&self) -> &[PoolProperty] {
        &self.pool
    }
}

/// Minimal CSV reader: comma-separated, double-quote quoting with `""`
/// escapes, `#` comment lines, and a mandatory header.
fn csv_records<const N: usize>(
    text: &str,
    arity: usize,
    header: &str,
) -> Result<Vec<(usize, [String; N])>, RegistryError> {
    debug_assert_eq!(arity, N);
    let mut out = Vec::new();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = idx + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = split_csv_line(line).map_err(|message| RegistryError::Parse { line: lineno, message })?;
        if !saw_header {
            let expected: Vec<&str> = header.split(',').collect();
            if fields.iter().map(String::as_str).collect::<Vec<_>>() != expected {
                return Err(RegistryError::Parse {
                    line: lineno,
                    message: format!("expected header {header:?}, got {:?}", fields.join(",")),
                });
            }
            saw_header = true;
            continue;
        }
        if fields.len() != arity {
            return Err(RegistryError::Parse {
                line: lineno,
                message: format!("expected {arity} fields, got {}", fields.len()),
            });
        }
        let mut array: [String; N] = core::array::from_fn(|_| String::new());
        for (slot, field) in array.iter_mut().zip(fields) {
            *slot = field;
        }
        out.push((lineno, array));
    }
    Ok(out)
}

fn split_csv_line(line: &str) -> Result<Vec<String>, String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut chars = line.chars().peekable();
    let mut in_quotes = false;
    while let Some(c) = chars.next() {
        if in_quotes {
            if c == '"' {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    current.push('"');
                } else {
                    in_quotes = false;
                }
            } else {
                current.push(c);
            }
        } else {
            match c {
                '"' if current.is_empty() => in_quotes = true,
                ',' => fields.push(core::mem::take(&mut current).trim().to_string()),
                other => current.push(other),
            }
        }
    }
    if in_quotes {
        return Err("unterminated quoted field".to_owned());
    }
    fields.push(current.trim().to_string());
    Ok(fields)
}
