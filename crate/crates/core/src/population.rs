//! Turning population-query results into tag bindings and materializing
//! dataset records from them.
//!
//! The transport (HTTP or the embedded evaluator) lives in the companion
//! crate; this module owns the pure parts: paging plans under the service
//! row cap, mapping result variables onto template tags, filling pool slots
//! and derived tags, deduplication, and record building.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use core::time::Duration;

use thiserror::Error;

use crate::dataset::DatasetRecord;
use crate::hash::{hash_parts, pick_index};
use crate::rdf::{RdfTerm, ResultSet, Row};
use crate::registry::Registry;
use crate::template::{pick_variant, render_query, render_utterance, Catalog, TagKind, TemplateSpec};

/// One set of tag bindings for a template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationRow {
    pub source_template: String,
    pub bindings: BTreeMap<String, String>,
}

/// Service limits observed while fetching population data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointLimits {
    /// Cap on rows fetched per template's population-query union.
    pub max_rows_per_query: usize,
    pub per_query_timeout: Duration,
    pub min_request_interval: Duration,
    pub max_retries: u32,
}

impl Default for EndpointLimits {
    fn default() -> Self {
        EndpointLimits {
            max_rows_per_query: 30_000,
            per_query_timeout: Duration::from_secs(60),
            min_request_interval: Duration::from_secs(1),
            max_retries: 3,
        }
    }
}

/// Page size for LIMIT/OFFSET pagination of population queries.
pub const PAGE_SIZE: usize = 10_000;

/// A LIMIT/OFFSET paging plan over a base population query. The final page
/// before the cap requests one extra row so truncation is detectable without
/// another round trip.
#[derive(Debug, Clone)]
pub struct PagePlan {
    base_query: String,
    cap: usize,
    fetched: usize,
    exhausted: bool,
    pub truncated: bool,
}

impl PagePlan {
    pub fn new(base_query: &str, limits: &EndpointLimits) -> Self {
        PagePlan {
            base_query: base_query.to_owned(),
            cap: limits.max_rows_per_query,
            fetched: 0,
            exhausted: false,
            truncated: false,
        }
    }

    /// The next page query, or None when done. `want` rows are requested;
    /// when the cap would be reached the request asks for cap-remainder + 1.
    pub fn next_page(&self) -> Option<(String, usize)> {
        if self.exhausted || self.fetched >= self.cap {
            return None;
        }
        let remaining = self.cap - self.fetched;
        // the page that could reach the cap asks for one extra row so
        // truncation is detectable without another request
        let want = if remaining <= PAGE_SIZE { remaining + 1 } else { PAGE_SIZE };
        Some((format!("{} LIMIT {} OFFSET {}", self.base_query, want, self.fetched), want))
    }

    /// Records a page of `returned` rows for a request of `want`; returns how
    /// many of them to keep.
    pub fn record_page(&mut self, want: usize, returned: usize) -> usize {
        let remaining = self.cap - self.fetched;
        let keep = returned.min(remaining);
        self.fetched += keep;
        if returned < want {
            self.exhausted = true;
        } else if self.fetched >= self.cap {
            // a full final page means at least one more row existed
            self.truncated = returned > remaining;
            self.exhausted = true;
        }
        keep
    }

    pub fn fetched(&self) -> usize {
        self.fetched
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PopulationError {
    #[error("template {template}: population result has no variable for tag {{{tag}}}")]
    MissingVariable { template: String, tag: String },
    #[error("template {template}: tag {{{tag}}} derived from missing tag {{{from_tag}}}")]
    MissingDeriveSource { template: String, tag: String, from_tag: String },
    #[error("template {template}: language code {code:?} is not in the language table")]
    UnknownLanguage { template: String, code: String },
    #[error("template {template}: pool is empty but tag {{{tag}}} is a pool slot")]
    EmptyPool { template: String, tag: String },
    #[error("template {template} row {row}: {message}")]
    Render { template: String, row: usize, message: String },
    #[error("unknown template {0}")]
    UnknownTemplate(String),
}

fn normalize(name: &str) -> String {
    name.chars().filter(|c| *c != '_').flat_map(char::to_lowercase).collect()
}

/// Serializes an RDF term as the tag kind expects.
fn serialize_for_tag(term: &RdfTerm, kind: TagKind) -> String {
    match kind {
        TagKind::Lemma | TagKind::FreeText => match term {
            RdfTerm::Literal { value, .. } => value.clone(),
            RdfTerm::Iri(_) => term.local_name().unwrap_or("").to_owned(),
        },
        TagKind::LanguageCode => match term {
            RdfTerm::Literal { value, .. } => value.clone(),
            RdfTerm::Iri(_) => term.local_name().unwrap_or("").to_owned(),
        },
        TagKind::LanguageQid => term.local_name().unwrap_or(term.str_value()).to_owned(),
        TagKind::PropertyValue => match term {
            RdfTerm::Iri(_) => format!("wd:{}", term.local_name().unwrap_or("")),
            RdfTerm::Literal { value, language, .. } => {
                let escaped = value.replace('\\', "\\\\").replace('\'', "\\'");
                match language {
                    Some(lang) => format!("'{escaped}'@{lang}"),
                    None => format!("'{escaped}'"),
                }
            }
        },
    }
}

/// The tags the `word` variable's language tag can auto-fill.
const WORD_TAG: &str = "word";

/// Maps one result row onto the template's tag schema.
///
/// Resolution order per tag: explicit `map:` entry, then a result variable
/// whose normalized name matches, then a `derive:` rule, then the built-in
/// language fills (language_code from the word literal's tag; language /
/// language_qid / language_code via the language table), then pool slots for
/// `propN` / `propN_label` tags.
fn map_row(
    spec: &TemplateSpec,
    row: &Row,
    registry: &Registry,
    seed: u64,
    row_index: u64,
) -> Result<BTreeMap<String, String>, PopulationError> {
    let by_normalized: BTreeMap<String, &RdfTerm> = row.iter().map(|(k, v)| (normalize(k), v)).collect();
    let mut bindings: BTreeMap<String, String> = BTreeMap::new();

    // pass 1: explicit maps and name matches
    for tag in &spec.tag_schema {
        let var_term = spec
            .population_map
            .get(&tag.name)
            .and_then(|var| row.get(var.as_str()).or_else(|| by_normalized.get(&normalize(var)).copied()))
            .or_else(|| by_normalized.get(&normalize(&tag.name)).copied());
        if let Some(term) = var_term {
            bindings.insert(tag.name.clone(), serialize_for_tag(term, tag.kind));
        }
    }

    // pass 2: derivations
    for derivation in &spec.derivations {
        if bindings.contains_key(&derivation.target) {
            continue;
        }
        let source = bindings.get(&derivation.source).cloned().ok_or_else(|| PopulationError::MissingDeriveSource {
            template: spec.id.clone(),
            tag: derivation.target.clone(),
            from_tag: derivation.source.clone(),
        })?;
        bindings.insert(derivation.target.clone(), derivation.function.apply(&source));
    }

    // pass 3: language fills from the word literal or from whichever of the
    // language tags is already bound
    let language_code_from_word = row
        .get(WORD_TAG)
        .or_else(|| by_normalized.get(WORD_TAG).copied())
        .and_then(|term| match term {
            RdfTerm::Literal { language: Some(lang), .. } => Some(lang.clone()),
            _ => None,
        });
    let known_code = bindings
        .get("language_code")
        .cloned()
        .or(language_code_from_word)
        .or_else(|| {
            bindings
                .get("language_qid")
                .and_then(|qid| registry.language_by_qid(qid))
                .map(|l| l.code.clone())
        });
    for tag in &spec.tag_schema {
        if bindings.contains_key(&tag.name) {
            continue;
        }
        let filled = match tag.name.as_str() {
            "language_code" => known_code.clone(),
            "language" => known_code
                .as_ref()
                .and_then(|code| registry.language_by_code(code))
                .map(|l| l.label.clone()),
            "language_qid" => known_code
                .as_ref()
                .and_then(|code| registry.language_by_code(code))
                .map(|l| l.qid.clone()),
            _ => None,
        };
        if let Some(value) = filled {
            bindings.insert(tag.name.clone(), value);
        } else if matches!(tag.name.as_str(), "language" | "language_qid")
            && known_code.is_some()
        {
            return Err(PopulationError::UnknownLanguage {
                template: spec.id.clone(),
                code: known_code.clone().unwrap_or_default(),
            });
        }
    }

    // pass 4: pool slots (prop1, prop1_label, ...)
    let pool = registry.pool();
    let mut slot = 0u64;
    for tag in &spec.tag_schema {
        if bindings.contains_key(&tag.name) {
            continue;
        }
        let base = tag.name.strip_suffix("_label").unwrap_or(&tag.name);
        if let Some(digits) = base.strip_prefix("prop") {
            if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) {
                if pool.is_empty() {
                    return Err(PopulationError::EmptyPool { template: spec.id.clone(), tag: tag.name.clone() });
                }
                let slot_seed = hash_parts(seed, &["pool", &spec.id, base]);
                let entry = &pool[pick_index(slot_seed, row_index ^ (slot << 32), pool.len())];
                slot += 1;
                if tag.name.ends_with("_label") {
                    bindings.insert(tag.name.clone(), entry.label.clone());
                } else {
                    bindings.insert(tag.name.clone(), entry.pid.clone());
                }
                continue;
            }
        }
        return Err(PopulationError::MissingVariable { template: spec.id.clone(), tag: tag.name.clone() });
    }

    // paired prop/prop_label slots must agree; rebind labels from the pids
    for tag in &spec.tag_schema {
        if let Some(base) = tag.name.strip_suffix("_label") {
            if base.starts_with("prop") {
                if let Some(pid) = bindings.get(base) {
                    if let Some(entry) = pool.iter().find(|p| &p.pid == pid) {
                        bindings.insert(tag.name.clone(), entry.label.clone());
                    }
                }
            }
        }
    }

    Ok(bindings)
}

/// Converts an executed population page into rows for `spec`. Rows whose
/// mapping fails (e.g. a lemma in a language outside the table) are skipped;
/// structural errors (no variable at all for a tag) abort.
pub fn rows_from_results(
    spec: &TemplateSpec,
    results: &ResultSet,
    registry: &Registry,
    seed: u64,
    first_row_index: u64,
) -> Result<Vec<PopulationRow>, PopulationError> {
    let ResultSet::Bindings { rows, .. } = results else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (offset, row) in rows.iter().enumerate() {
        match map_row(spec, row, registry, seed, first_row_index + offset as u64) {
            Ok(bindings) => {
                if bindings.values().any(|v| v.is_empty()) {
                    continue;
                }
                out.push(PopulationRow { source_template: spec.id.clone(), bindings });
            }
            Err(PopulationError::UnknownLanguage { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Removes duplicate binding sets, keeping first occurrences.
pub fn dedup_rows(rows: Vec<PopulationRow>) -> Vec<PopulationRow> {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let mut key = String::from(&row.source_template);
        for (tag, value) in &row.bindings {
            key.push('\u{1}');
            key.push_str(tag);
            key.push('\u{2}');
            key.push_str(value);
        }
        if seen.insert(key) {
            out.push(row);
        }
    }
    out
}

/// Materializes dataset records: one per row, utterance variant chosen by the
/// seeded hash, query rendered from the same bindings. Record order is
/// (template id, row index); the result is a pure function of its inputs.
pub fn build_dataset(
    catalog: &Catalog,
    rows_by_template: &BTreeMap<String, Vec<PopulationRow>>,
    seed: u64,
) -> Result<Vec<DatasetRecord>, PopulationError> {
    let mut records = Vec::new();
    for (template_id, rows) in rows_by_template {
        let spec = catalog
            .template(template_id)
            .ok_or_else(|| PopulationError::UnknownTemplate(template_id.clone()))?;
        for (row_index, row) in rows.iter().enumerate() {
            let variant = pick_variant(spec, seed, row_index as u64);
            let render = |result: Result<String, crate::template::RenderError>| {
                result.map_err(|e| PopulationError::Render {
                    template: template_id.clone(),
                    row: row_index,
                    message: e.to_string(),
                })
            };
            let utterance = render(render_utterance(spec, &row.bindings, variant))?;
            let query = render(render_query(spec, &row.bindings))?;
            records.push(DatasetRecord { utterance, template_name: template_id.clone(), query });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn registry() -> Registry {
        let mut r = Registry::load("pid,label,category,attachment,range_kind\nP5185,grammatical gender,Linguistic,lexeme,q_item\n").unwrap();
        r.load_languages("qid,code,label\nQ188,de,German\nQ1860,en,English\nQ9056,cs,Czech\n").unwrap();
        r.load_pool("pid,label\nP31,instance of\nP18,image\nP373,category\n").unwrap();
        r
    }

    fn gender_template() -> Catalog {
        Catalog::from_documents(
            "[template t1_P5185]\nparadigm: property\noutput: single\nlinguality: mono\ncomplexity: simple\n\
tag: word lemma\ntag: language free_text\ntag: language_code language_code\nuses: P5185\n\
variant: What is the gender of {word} in {language}?\n\
population:\n  SELECT ?word WHERE { ?lexeme wikibase:lemma ?word ; wdt:P5185 ?x . } ORDER BY ?lexeme\n\
body:\n  SELECT ?lexeme ?qitem ?lemma ?qitemLabel\n  WHERE\n  {\n    VALUES ?lemma {'{word}'@{language_code}} .\n    ?lexeme wikibase:lemma ?lemma ;\n            wdt:P5185 ?qitem.\n    SERVICE wikibase:label {\n      bd:serviceParam wikibase:language 'en'\n    }\n  }\n[end]\n",
        )
        .unwrap()
    }

    fn word_row(word: &str, code: &str) -> Row {
        [("word".to_string(), RdfTerm::lang_literal(word, code))].into_iter().collect()
    }

    #[test]
    fn maps_word_and_fills_language_tags() {
        let catalog = gender_template();
        let spec = catalog.template("t1_P5185").unwrap();
        let results = ResultSet::Bindings { variables: vec!["word".into()], rows: vec![word_row("Apfel", "de")] };
        let rows = rows_from_results(spec, &results, &registry(), 1, 0).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].bindings["word"], "Apfel");
        assert_eq!(rows[0].bindings["language_code"], "de");
        assert_eq!(rows[0].bindings["language"], "German");
    }

    #[test]
    fn unknown_language_rows_are_skipped() {
        let catalog = gender_template();
        let spec = catalog.template("t1_P5185").unwrap();
        let results = ResultSet::Bindings {
            variables: vec!["word".into()],
            rows: vec![word_row("sana", "fi"), word_row("Apfel", "de")],
        };
        let rows = rows_from_results(spec, &results, &registry(), 1, 0).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].bindings["word"], "Apfel");
    }

    #[test]
    fn empty_results_yield_no_rows() {
        let catalog = gender_template();
        let spec = catalog.template("t1_P5185").unwrap();
        let results = ResultSet::Bindings { variables: vec!["word".into()], rows: vec![] };
        assert!(rows_from_results(spec, &results, &registry(), 1, 0).unwrap().is_empty());
    }

    #[test]
    fn pool_slots_fill_deterministically() {
        let catalog = Catalog::from_documents(
            "[template mp2]\nparadigm: multi_property\noutput: single\nlinguality: mono\ncomplexity: complex\n\
tag: word lemma\ntag: language_code language_code\ntag: prop1 free_text\ntag: prop1_label free_text\ntag: prop2 free_text\ntag: prop2_label free_text\n\
variant: What are the {prop1_label} and {prop2_label} of {word}?\n\
body:\n  SELECT ?lexeme ?lemma ?v1 ?v2 WHERE { VALUES ?lemma {'{word}'@{language_code}} . ?lexeme wikibase:lemma ?lemma . OPTIONAL { ?lexeme wdt:{prop1} ?v1 . } OPTIONAL { ?lexeme wdt:{prop2} ?v2 . } }\n[end]\n",
        )
        .unwrap();
        let spec = catalog.template("mp2").unwrap();
        let results = ResultSet::Bindings { variables: vec!["word".into()], rows: vec![word_row("Apfel", "de")] };
        let a = rows_from_results(spec, &results, &registry(), 42, 0).unwrap();
        let b = rows_from_results(spec, &results, &registry(), 42, 0).unwrap();
        assert_eq!(a, b);
        let pid = &a[0].bindings["prop1"];
        assert!(pid.starts_with('P'));
        let label = &a[0].bindings["prop1_label"];
        let expected = registry().pool().iter().find(|p| &p.pid == pid).unwrap().label.clone();
        assert_eq!(label, &expected);
    }

    #[test]
    fn derivations_apply_after_mapping() {
        let catalog = Catalog::from_documents(
            "[template rb4]\nparadigm: rule_based\noutput: multi\nlinguality: mono\ncomplexity: simple\n\
tag: word lemma\ntag: pattern free_text\ntag: language free_text\ntag: language_qid language_qid\n\
derive: pattern=word:prefix1\n\
variant: Find at most 50 words starting with {pattern} in {language}\n\
population:\n  SELECT ?word WHERE { ?lexeme wikibase:lemma ?word ; dct:language ?q . } ORDER BY ?lexeme\n\
body:\n  SELECT ?lexeme ?lemma WHERE { ?lexeme dct:language wd:{language_qid} ; wikibase:lemma ?lemma . FILTER(regex(STR(?lemma), '^{pattern}')) } LIMIT 50\n[end]\n",
        )
        .unwrap();
        let spec = catalog.template("rb4").unwrap();
        let results = ResultSet::Bindings { variables: vec!["word".into()], rows: vec![word_row("Äpfelchen", "de")] };
        let rows = rows_from_results(spec, &results, &registry(), 1, 0).unwrap();
        assert_eq!(rows[0].bindings["pattern"], "Ä");
        assert_eq!(rows[0].bindings["language_qid"], "Q188");
    }

    #[test]
    fn dedup_removes_identical_binding_sets() {
        let row = PopulationRow {
            source_template: "t".into(),
            bindings: [("word".to_string(), "See".to_string())].into_iter().collect(),
        };
        let deduped = dedup_rows(vec![row.clone(), row.clone()]);
        assert_eq!(deduped.len(), 1);
    }

    #[test]
    fn page_plan_caps_and_detects_truncation() {
        let limits = EndpointLimits { max_rows_per_query: 30_000, ..Default::default() };
        let mut plan = PagePlan::new("SELECT ?w WHERE { }", &limits);
        // page 1 and 2 full
        for _ in 0..2 {
            let (query, want) = plan.next_page().unwrap();
            assert!(query.contains("LIMIT 10000"));
            assert_eq!(plan.record_page(want, want), want);
        }
        // final page: asks for remaining + 1 = 10001; endpoint has 30001 rows
        let (query, want) = plan.next_page().unwrap();
        assert!(query.contains("LIMIT 10001"), "{query}");
        assert_eq!(want, 10_001);
        let kept = plan.record_page(want, 10_001);
        assert_eq!(kept, 10_000);
        assert_eq!(plan.fetched(), 30_000);
        assert!(plan.truncated);
        assert!(plan.next_page().is_none());
    }

    #[test]
    fn page_plan_exact_boundary_is_not_truncated() {
        let limits = EndpointLimits { max_rows_per_query: 20, ..Default::default() };
        let mut plan = PagePlan::new("Q", &limits);
        let (_, want) = plan.next_page().unwrap();
        assert_eq!(want, 21);
        // endpoint has exactly 20 rows
        assert_eq!(plan.record_page(want, 20), 20);
        assert!(!plan.truncated);
        assert!(plan.next_page().is_none());
    }

    #[test]
    fn build_dataset_is_deterministic_arithmetic() {
        let catalog = gender_template();
        let registry = registry();
        let spec = catalog.template("t1_P5185").unwrap();
        let words = ["Apfel", "Baum", "Haus", "Hund", "See"];
        let rows: Vec<Row> = words.iter().map(|w| word_row(w, "de")).collect();
        let results = ResultSet::Bindings { variables: vec!["word".into()], rows };
        let population = rows_from_results(spec, &results, &registry, 9, 0).unwrap();
        let mut by_template = BTreeMap::new();
        by_template.insert("t1_P5185".to_string(), population);
        let records = build_dataset(&catalog, &by_template, 9).unwrap();
        assert_eq!(records.len(), 5);
        assert_eq!(records[0].template_name, "t1_P5185");
        assert!(records[0].query.contains("VALUES ?lemma {'Apfel'@de}"));
        assert_eq!(records[0].utterance, "What is the gender of Apfel in German?");
        assert_eq!(records, build_dataset(&catalog, &by_template, 9).unwrap());
        // empty input
        assert!(build_dataset(&catalog, &BTreeMap::new(), 9).unwrap().is_empty());
        // unknown template
        let mut bad = BTreeMap::new();
        bad.insert("nope".to_string(), Vec::new());
        assert!(matches!(build_dataset(&catalog, &bad, 9), Err(PopulationError::UnknownTemplate(_))));
    }
}
