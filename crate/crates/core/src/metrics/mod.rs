//! Evaluation metrics: pass@k, aggregated granularity ratios, and corpus
//! BLEU, plus the per-record evaluation driver that executes generated
//! queries and compares their results against gold.

pub mod bleu;

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;

use num_rational::Ratio;
use thiserror::Error;

pub use bleu::{bleu_corpus, tokenize_13a, BleuError};

use crate::check::{extract_qitems, run_checks, CheckProfile};
use crate::dataset::DatasetRecord;
use crate::exec::{contains_expected, ExecFailure, QueryExecutor};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("pass@k over an empty response list")]
    EmptyResponses,
    #[error("no records left to aggregate (all voided)")]
    NothingToAggregate,
    #[error(transparent)]
    Bleu(#[from] BleuError),
}

/// `k_correct / k`, exactly.
pub fn pass_at_k(correct_flags: &[bool]) -> Result<Ratio<u64>, MetricsError> {
    if correct_flags.is_empty() {
        return Err(MetricsError::EmptyResponses);
    }
    let correct = correct_flags.iter().filter(|f| **f).count() as u64;
    Ok(Ratio::new(correct, correct_flags.len() as u64))
}

/// Pulls the SPARQL out of a model response: the `<code>...</code>` fence
/// when present, else the longest suffix starting at the first SELECT/ASK
/// keyword, else the whole response.
pub fn extract_sparql(response: &str) -> &str {
    if let Some(start) = response.find("<code>") {
        let body = &response[start + "<code>".len()..];
        let end = body.find("</code>").unwrap_or(body.len());
        return body[..end].trim();
    }
    let lower = response.to_lowercase();
    let select = find_word(&lower, "select");
    let ask = find_word(&lower, "ask");
    let at = match (select, ask) {
        (Some(s), Some(a)) => Some(s.min(a)),
        (Some(s), None) => Some(s),
        (None, Some(a)) => Some(a),
        (None, None) => None,
    };
    match at {
        Some(pos) => response[pos..].trim(),
        None => response.trim(),
    }
}

fn find_word(haystack: &str, needle: &str) -> Option<usize> {
    let mut from = 0;
    while let Some(rel) = haystack[from..].find(needle) {
        let pos = from + rel;
        let before_ok = pos == 0 || !haystack[..pos].chars().next_back().unwrap().is_alphanumeric();
        let after = haystack[pos + needle.len()..].chars().next();
        let after_ok = after.map(|c| !c.is_alphanumeric()).unwrap_or(true);
        if before_ok && after_ok {
            return Some(pos);
        }
        from = pos + needle.len();
    }
    None
}

/// The outcome of evaluating all `k` responses for one test record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordEvaluation {
    pub record_id: String,
    pub responses: Vec<String>,
    /// SPARQL extracted from each response.
    pub extracted: Vec<String>,
    pub correct_flags: Vec<bool>,
    pub pass_at_k: Ratio<u64>,
    /// Mean of the per-response granularity ratios.
    pub granularity: Ratio<u64>,
    /// (candidate, reference) for corpus BLEU: first extracted response vs
    /// the gold query.
    pub bleu_candidate: String,
    pub bleu_reference: String,
}

/// A record whose gold query failed to execute; excluded from aggregation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoidedRecord {
    pub record_id: String,
    pub reason: ExecFailure,
}

/// Evaluates one record: executes the gold query (a failure voids the
/// record), then executes each response, applies the containment rule, and
/// runs the granularity checks on the extracted text. Response execution
/// failures score as incorrect, never as errors. The check profile is
/// extended per record with the Q-items of the gold query.
pub fn evaluate_record(
    gold: &DatasetRecord,
    record_id: &str,
    responses: &[String],
    executor: &dyn QueryExecutor,
    check_profile: &CheckProfile,
) -> Result<RecordEvaluation, VoidedRecord> {
    let gold_result = executor
        .execute(&gold.query)
        .map_err(|reason| VoidedRecord { record_id: record_id.to_owned(), reason })?;

    let mut profile = check_profile.clone();
    profile.known_qitems.extend(extract_qitems(&gold.query));

    let mut extracted = Vec::with_capacity(responses.len());
    let mut correct_flags = Vec::with_capacity(responses.len());
    let mut granularity_sum: Ratio<u64> = Ratio::new(0, 1);
    for response in responses {
        let text = extract_sparql(response).to_owned();
        let correct = match executor.execute(&text) {
            Ok(result) => contains_expected(&result, &gold_result),
            Err(_) => false,
        };
        correct_flags.push(correct);
        let report = run_checks(&text, &profile);
        let ratio = report.ratio();
        granularity_sum += Ratio::new(u64::from(*ratio.numer()), u64::from(*ratio.denom()));
        extracted.push(text);
    }

    let k = responses.len().max(1) as u64;
    let pass = pass_at_k(&correct_flags).unwrap_or_else(|_| Ratio::new(0, 1));
    Ok(RecordEvaluation {
        record_id: record_id.to_owned(),
        responses: responses.to_vec(),
        bleu_candidate: extracted.first().cloned().unwrap_or_default(),
        bleu_reference: gold.query.clone(),
        extracted,
        correct_flags,
        pass_at_k: pass,
        granularity: granularity_sum / Ratio::new(k, 1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    NonGeneralization,
    Generalization,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::NonGeneralization => "non_generalization",
            Scenario::Generalization => "generalization",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "non_generalization" => Some(Scenario::NonGeneralization),
            "generalization" => Some(Scenario::Generalization),
            _ => None,
        }
    }
}

/// Which response feeds corpus BLEU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BleuMode {
    /// The first response of each record (the default, fixed convention).
    #[default]
    FirstResponse,
    /// The response with the highest single-pair score.
    BestOfK,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub scenario: Scenario,
    pub k: usize,
    pub mean_pass_at_k: Ratio<u64>,
    pub mean_granularity: Ratio<u64>,
    pub corpus_bleu: f64,
    pub n_records: usize,
    pub n_voided: usize,
}

impl AggregateReport {
    pub fn mean_pass_at_k_f64(&self) -> f64 {
        ratio_to_f64(self.mean_pass_at_k)
    }

    pub fn mean_granularity_f64(&self) -> f64 {
        ratio_to_f64(self.mean_granularity)
    }
}

pub fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / (*r.denom()).max(1) as f64
}

/// Aggregates record evaluations: exact rational means for pass@k and
/// granularity, corpus BLEU over the configured candidate choice.
pub fn aggregate(
    evals: &[RecordEvaluation],
    scenario: Scenario,
    k: usize,
    n_voided: usize,
    bleu_mode: BleuMode,
) -> Result<AggregateReport, MetricsError> {
    if evals.is_empty() {
        return Err(MetricsError::NothingToAggregate);
    }
    let n = Ratio::new(evals.len() as u64, 1);
    let mean_pass = evals.iter().map(|e| e.pass_at_k).sum::<Ratio<u64>>() / n;
    let mean_gran = evals.iter().map(|e| e.granularity).sum::<Ratio<u64>>() / n;

    let mut candidates = Vec::with_capacity(evals.len());
    let mut references = Vec::with_capacity(evals.len());
    for eval in evals {
        let candidate = match bleu_mode {
            BleuMode::FirstResponse => eval.bleu_candidate.clone(),
            BleuMode::BestOfK => {
                let mut best = eval.bleu_candidate.clone();
                let mut best_score = -1.0f64;
                for text in &eval.extracted {
                    let score = bleu_corpus(core::slice::from_ref(text), core::slice::from_ref(&eval.bleu_reference))?;
                    if score > best_score {
                        best_score = score;
                        best = text.clone();
                    }
                }
                best
            }
        };
        candidates.push(candidate);
        references.push(eval.bleu_reference.clone());
    }
    let corpus_bleu = bleu_corpus(&candidates, &references)?;

    Ok(AggregateReport {
        scenario,
        k,
        mean_pass_at_k: mean_pass,
        mean_granularity: mean_gran,
        corpus_bleu,
        n_records: evals.len(),
        n_voided,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use crate::rdf::{RdfTerm, Snapshot};
    use alloc::format;
    use alloc::vec;

    #[test]
    fn pass_at_k_is_the_exact_ratio() {
        assert_eq!(pass_at_k(&[true, false, true]).unwrap(), Ratio::new(2, 3));
        assert_eq!(pass_at_k(&[false]).unwrap(), Ratio::new(0, 1));
        assert_eq!(pass_at_k(&[true, true, true]).unwrap(), Ratio::new(1, 1));
        assert_eq!(pass_at_k(&[]).unwrap_err(), MetricsError::EmptyResponses);
    }

    #[test]
    fn pass_at_k_is_permutation_invariant() {
        assert_eq!(pass_at_k(&[true, false, false, true, true]).unwrap(), pass_at_k(&[false, true, true, true, false]).unwrap());
    }

    #[test]
    fn extraction_prefers_the_code_fence() {
        assert_eq!(extract_sparql("answer: <code>SELECT ?x WHERE { }</code> extra"), "SELECT ?x WHERE { }");
        assert_eq!(extract_sparql("<code>ASK { }"), "ASK { }");
        assert_eq!(extract_sparql("Sure! SELECT ?x WHERE { }"), "SELECT ?x WHERE { }");
        assert_eq!(extract_sparql("sure: ask where { }"), "ask where { }");
        // word-boundary: "task" is not ASK, "selector" is not SELECT
        assert_eq!(extract_sparql("the task selector output"), "the task selector output");
        assert_eq!(extract_sparql("no query here"), "no query here");
    }

    fn gender_snapshot() -> Snapshot {
        let e = |l: &str| format!("http://www.wikidata.org/entity/{l}");
        Snapshot::from_triples(vec![
            (RdfTerm::iri(e("L1")), RdfTerm::iri("http://wikiba.se/ontology#lemma"), RdfTerm::lang_literal("Apfel", "de")),
            (RdfTerm::iri(e("L1")), RdfTerm::iri("http://www.wikidata.org/prop/direct/P5185"), RdfTerm::iri(e("Q1775415"))),
            (RdfTerm::iri(e("Q1775415")), RdfTerm::iri("http://www.w3.org/2000/01/rdf-schema#label"), RdfTerm::lang_literal("feminine", "en")),
        ])
    }

    const GOLD_QUERY: &str = "SELECT ?lexeme ?qitem ?lemma ?qitemLabel\nWHERE\n{\n  VALUES ?lemma {'Apfel'@de} .\n  ?lexeme wikibase:lemma ?lemma ;\n          wdt:P5185 ?qitem.\n  SERVICE wikibase:label {\n    bd:serviceParam wikibase:language 'en'\n  }\n}";

    fn gold() -> DatasetRecord {
        DatasetRecord {
            utterance: "What is the gender of Apfel in German?".into(),
            template_name: "t1_P5185".into(),
            query: GOLD_QUERY.into(),
        }
    }

    #[test]
    fn identical_response_passes() {
        let snapshot = gender_snapshot();
        let eval = evaluate_record(&gold(), "t1_P5185#0", &[GOLD_QUERY.to_string()], &snapshot, &CheckProfile::gold_lint()).unwrap();
        assert_eq!(eval.correct_flags, vec![true]);
        assert_eq!(eval.pass_at_k, Ratio::new(1, 1));
        assert_eq!(eval.granularity, Ratio::new(1, 1));
    }

    #[test]
    fn two_of_three_responses_pass() {
        let snapshot = gender_snapshot();
        let renamed = GOLD_QUERY.replace("?qitem", "?genderItem");
        let responses = vec![GOLD_QUERY.to_string(), "gibberish".to_string(), renamed];
        let eval = evaluate_record(&gold(), "id", &responses, &snapshot, &CheckProfile::full()).unwrap();
        assert_eq!(eval.correct_flags, vec![true, false, true]);
        assert_eq!(eval.pass_at_k, Ratio::new(2, 3));
    }

    #[test]
    fn gold_execution_failure_voids_the_record() {
        let snapshot = gender_snapshot();
        let mut record = gold();
        record.query = "SELECT ?x WHERE { ?x wdt:P31/wdt:P279 ?y }".into();
        let err = evaluate_record(&record, "id", &[GOLD_QUERY.to_string()], &snapshot, &CheckProfile::full()).unwrap_err();
        assert_eq!(err.record_id, "id");
        assert!(matches!(err.reason, ExecFailure::Unsupported(_)));
    }

    #[test]
    fn gold_qitems_are_known_to_c7() {
        let snapshot = gender_snapshot();
        // a response that answers with the constant from the gold result
        let response = "ASK { ?lexeme wikibase:lemma 'Apfel'@de ; wdt:P5185 wd:Q1775415 }".to_string();
        let mut record = gold();
        record.query = response.clone();
        let eval = evaluate_record(&record, "id", &[response], &snapshot, &CheckProfile::full()).unwrap();
        // all seven checks applicable to ASK pass: C1, C3, C4, C5, C6, C7
        assert_eq!(eval.granularity, Ratio::new(1, 1));
    }

    #[test]
    fn aggregate_means_and_bookkeeping() {
        let snapshot = gender_snapshot();
        let e1 = evaluate_record(&gold(), "a", &[GOLD_QUERY.to_string()], &snapshot, &CheckProfile::gold_lint()).unwrap();
        let e2 = evaluate_record(&gold(), "b", &["nothing useful".to_string()], &snapshot, &CheckProfile::gold_lint()).unwrap();
        let report = aggregate(&[e1, e2], Scenario::NonGeneralization, 1, 1, BleuMode::FirstResponse).unwrap();
        assert_eq!(report.mean_pass_at_k, Ratio::new(1, 2));
        assert_eq!(report.n_records, 2);
        assert_eq!(report.n_voided, 1);
        assert!(report.corpus_bleu > 0.0 && report.corpus_bleu < 100.0);
        assert!(report.mean_granularity < Ratio::new(1, 1));
    }

    #[test]
    fn aggregate_identity_scores_perfect() {
        let snapshot = gender_snapshot();
        let evals: Vec<RecordEvaluation> = (0..3)
            .map(|i| {
                evaluate_record(&gold(), &format!("r{i}"), &[GOLD_QUERY.to_string()], &snapshot, &CheckProfile::gold_lint()).unwrap()
            })
            .collect();
        let report = aggregate(&evals, Scenario::NonGeneralization, 1, 0, BleuMode::FirstResponse).unwrap();
        assert_eq!(report.mean_pass_at_k, Ratio::new(1, 1));
        assert!((report.corpus_bleu - 100.0).abs() < 1e-9);
    }

    #[test]
    fn aggregate_of_nothing_is_an_error() {
        assert_eq!(
            aggregate(&[], Scenario::Generalization, 1, 5, BleuMode::FirstResponse).unwrap_err(),
            MetricsError::NothingToAggregate
        );
    }
}
