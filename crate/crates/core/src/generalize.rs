//! The generalization scenario: rewriting SELECT records into yes/no ASK
//! records, and building structure-held-out splits.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::check::{tokenize, TokenKind};
use crate::dataset::{DatasetRecord, SplitResult};
use crate::hash::{hash_parts, pick_index};
use crate::rdf::{RdfTerm, ResultSet};
use crate::template::{AnswerShape, AskRule, Catalog, TemplateSpec};

/// A SELECT record transformed into a yes/no question with an ASK query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneralizationRecord {
    pub base_record_id: String,
    pub utterance: String,
    pub query: String,
    pub expected_truth: bool,
    pub answer_value: RdfTerm,
    /// `ask_<base template id>`, so holdout leakage checks over template
    /// names remain meaningful.
    pub template_name: String,
}

/// Wire form of a generalization record (`generalization.jsonl`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneralizationExport {
    pub id: String,
    pub utterance: String,
    pub query: String,
    pub expected_truth: bool,
}

impl From<&GeneralizationRecord> for GeneralizationExport {
    fn from(record: &GeneralizationRecord) -> Self {
        GeneralizationExport {
            id: record.base_record_id.clone(),
            utterance: record.utterance.clone(),
            query: record.query.clone(),
            expected_truth: record.expected_truth,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeneralizeError {
    #[error("template {0} has no ASK rewrite rule")]
    NoRewriteRule(String),
    #[error("record {0}: gold query has no recoverable lemma binding")]
    NoLemmaBinding(String),
    #[error("record {0}: gold query references no lexical property")]
    NoProperty(String),
    #[error("record {0}: answer sampling failed (empty gold result)")]
    AnswerSamplingFailed(String),
    #[error("record {0}: no negative answer candidate available")]
    NoNegativeCandidate(String),
    #[error("held shape not present in catalog")]
    HeldShapeAbsent,
    #[error("unknown template {0}")]
    UnknownTemplate(String),
}

/// Pulls `(word, language_code)` out of the gold query's
/// `VALUES ?lemma {'word'@code}` clause.
fn lemma_binding(query: &str) -> Option<(String, String)> {
    let tokens = tokenize(query);
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i].kind == TokenKind::Keyword && tokens[i].text.eq_ignore_ascii_case("values") {
            // VALUES ?var { 'literal'@tag }
            let literal = tokens[i..].iter().take(8).find(|t| t.kind == TokenKind::Literal)?;
            let tag = tokens[i..]
                .iter()
                .take(9)
                .find(|t| t.kind == TokenKind::LanguageTag)
                .map(|t| t.text[1..].to_owned())?;
            let raw = literal.text;
            let inner = &raw[1..raw.len() - 1];
            let unescaped = inner.replace("\\'", "'").replace("\\\\", "\\");
            return Some((unescaped, tag));
        }
        i += 1;
    }
    None
}

/// The first `wdt:P...` property mentioned in the query.
fn first_property(query: &str) -> Option<String> {
    tokenize(query).iter().find_map(|t| {
        if t.kind != TokenKind::PrefixedName {
            return None;
        }
        let local = t.text.strip_prefix("wdt:")?;
        let mut cs = local.chars();
        (cs.next() == Some('P') && local.len() > 1 && cs.all(|c| c.is_ascii_digit())).then(|| local.to_owned())
    })
}

fn render_answer_term(term: &RdfTerm) -> String {
    match term {
        RdfTerm::Iri(_) => alloc::format!("wd:{}", term.local_name().unwrap_or("")),
        RdfTerm::Literal { value, language, .. } => {
            let escaped = value.replace('\\', "\\\\").replace('\'', "\\'");
            match language {
                Some(lang) => alloc::format!("'{escaped}'@{lang}"),
                None => alloc::format!("'{escaped}'"),
            }
        }
    }
}

fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_owned();
    for (key, value) in pairs {
        out = out.replace(&alloc::format!("{{{key}}}"), value);
    }
    out
}

fn rewrite_utterance(rule: &AskRule, utterance: &str, answer_label: &str) -> String {
    for rewrite in &rule.rewrites {
        if rewrite.prefix.is_empty() || utterance.starts_with(&rewrite.prefix) {
            let rest = utterance[rewrite.prefix.len()..].trim().trim_end_matches('?').trim_end();
            return fill(&rewrite.template, &[("rest", rest), ("answer", answer_label)]);
        }
    }
    // no rule matched and no catch-all: a generic yes/no wrapper
    let stem = utterance.trim().trim_end_matches('?').trim_end();
    alloc::format!("Is the answer to \"{stem}\" {answer_label}?")
}

/// Transforms a SELECT record into an ASK record embedding `answer_value`.
/// The positive case uses an answer sampled from the gold result; with
/// `negate` the caller passes a same-type non-answer and the expected truth
/// flips to false.
pub fn to_ask(
    record: &DatasetRecord,
    record_id: &str,
    spec: &TemplateSpec,
    catalog: &Catalog,
    answer_value: &RdfTerm,
    answer_label: &str,
    negate: bool,
) -> Result<GeneralizationRecord, GeneralizeError> {
    let archetype = spec.archetype().ok_or_else(|| GeneralizeError::NoRewriteRule(spec.id.clone()))?;
    let rule = catalog.ask_rule(archetype).ok_or_else(|| GeneralizeError::NoRewriteRule(spec.id.clone()))?;
    if spec.answer_shape != AnswerShape::Select {
        return Err(GeneralizeError::NoRewriteRule(spec.id.clone()));
    }
    let (word, code) = lemma_binding(&record.query).ok_or_else(|| GeneralizeError::NoLemmaBinding(record_id.to_owned()))?;
    let pid = first_property(&record.query).ok_or_else(|| GeneralizeError::NoProperty(record_id.to_owned()))?;

    let escaped_word = word.replace('\\', "\\\\").replace('\'', "\\'");
    let query = fill(
        &rule.body,
        &[
            ("word", escaped_word.as_str()),
            ("language_code", code.as_str()),
            ("pid", pid.as_str()),
            ("answer", render_answer_term(answer_value).as_str()),
        ],
    );
    let utterance = rewrite_utterance(rule, &record.utterance, answer_label);
    Ok(GeneralizationRecord {
        base_record_id: record_id.to_owned(),
        utterance,
        query,
        expected_truth: !negate,
        answer_value: answer_value.clone(),
        template_name: alloc::format!("ask_{}", spec.id),
    })
}

/// Samples one answer binding (term + display label) from an executed gold
/// result, deterministically in (seed, index).
pub fn sample_answer(result: &ResultSet, answer_var: &str, seed: u64, index: u64) -> Option<(RdfTerm, String)> {
    let ResultSet::Bindings { rows, .. } = result else { return None };
    let candidates: Vec<(&RdfTerm, String)> = rows
        .iter()
        .filter_map(|row| {
            let term = row.get(answer_var)?;
            let label_var = alloc::format!("{answer_var}Label");
            let label = row
                .get(label_var.as_str())
                .map(|t| t.str_value().to_owned())
                .unwrap_or_else(|| match term {
                    RdfTerm::Literal { value, .. } => value.clone(),
                    RdfTerm::Iri(_) => term.local_name().unwrap_or("").to_owned(),
                });
            Some((term, label))
        })
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let pick = pick_index(hash_parts(seed, &["answer", answer_var]), index, candidates.len());
    let (term, label) = &candidates[pick];
    Some(((*term).clone(), label.clone()))
}

/// Samples a same-kind term that does NOT appear among the gold answers,
/// from `pool` (e.g. answers of other records of the same template).
pub fn sample_negative(
    result: &ResultSet,
    answer_var: &str,
    pool: &[(RdfTerm, String)],
    seed: u64,
    index: u64,
) -> Option<(RdfTerm, String)> {
    let positives: BTreeSet<String> = match result {
        ResultSet::Bindings { rows, .. } => rows
            .iter()
            .filter_map(|row| row.get(answer_var).map(|t| t.canonical()))
            .collect(),
        ResultSet::Boolean(_) => BTreeSet::new(),
    };
    let sample_kind_iri = pool.first().map(|(t, _)| t.is_iri());
    let candidates: Vec<&(RdfTerm, String)> = pool
        .iter()
        .filter(|(term, _)| !positives.contains(&term.canonical()))
        .filter(|(term, _)| Some(term.is_iri()) == sample_kind_iri)
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let pick = pick_index(hash_parts(seed, &["negative", answer_var]), index, candidates.len());
    let (term, label) = candidates[pick];
    Some((term.clone(), label.clone()))
}

/// Partitions records by their template's answer shape: train keeps every
/// record whose shape differs from `held_shape`; test receives the records of
/// the held shape. No template of the held shape contributes to train.
pub fn holdout_by_shape(
    catalog: &Catalog,
    records: &[DatasetRecord],
    held_shape: AnswerShape,
) -> Result<SplitResult, GeneralizeError> {
    if !catalog.templates().any(|t| t.answer_shape == held_shape) {
        return Err(GeneralizeError::HeldShapeAbsent);
    }
    let mut result = SplitResult::default();
    for record in records {
        let spec = catalog
            .template(&record.template_name)
            .ok_or_else(|| GeneralizeError::UnknownTemplate(record.template_name.clone()))?;
        if spec.answer_shape == held_shape {
            result.test.push(record.clone());
        } else {
            result.train.push(record.clone());
        }
    }
    for record in result.train.iter().chain(result.test.iter()) {
        let entry = result.per_template_counts.entry(record.template_name.clone()).or_insert((0, 0));
        let spec = catalog.template(&record.template_name).expect("checked above");
        if spec.answer_shape == held_shape {
            entry.1 += 1;
        } else {
            entry.0 += 1;
        }
    }
    Ok(result)
}
