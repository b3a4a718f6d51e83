//! Dataset records, the per-template train/test split, and the text formats:
//! JSONL, the `question:`/`answer: <code>` training format, and few-shot
//! prompts.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{hash_parts, splitmix64};

/// One data point: a natural-language utterance, the template it came from,
/// and the populated query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub utterance: String,
    pub template_name: String,
    pub query: String,
}

/// Split parameters: per template, the test side receives
/// `min(max(min_test_per_template, floor(n * test_fraction)), test_cap, n)`
/// records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitConfig {
    /// Numerator/denominator of the test fraction.
    pub test_fraction: (u64, u64),
    pub test_cap: usize,
    pub min_test_per_template: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { test_fraction: (1, 10), test_cap: 20, min_test_per_template: 1, seed: 0 }
    }
}

impl SplitConfig {
    pub fn with_seed(seed: u64) -> Self {
        SplitConfig { seed, ..SplitConfig::default() }
    }

    /// The closed-form per-template test count.
    pub fn test_count(&self, n: usize) -> usize {
        let (num, den) = self.test_fraction;
        let fraction = (n as u64 * num / den) as usize;
        fraction.max(self.min_test_per_template).min(self.test_cap).min(n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitResult {
    pub train: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
    /// Template id to (train count, test count).
    pub per_template_counts: BTreeMap<String, (usize, usize)>,
}

fn record_hash(record: &DatasetRecord) -> u64 {
    hash_parts(0, &[&record.utterance, &record.template_name, &record.query])
}

/// Order-insensitive shuffle key for a record within its template group.
fn shuffle_key(seed: u64, template: &str, record: &DatasetRecord) -> u64 {
    splitmix64(hash_parts(seed, &["split", template]) ^ record_hash(record))
}

/// Splits records into train/test per template. Selection is a seeded hash
/// shuffle within each template, so membership depends only on the seed and
/// the record contents, not input order; per-template counts follow the
/// closed-form rule for any seed.
pub fn split(records: &[DatasetRecord], config: &SplitConfig) -> SplitResult {
    let mut by_template: BTreeMap<&str, Vec<(usize, &DatasetRecord)>> = BTreeMap::new();
    for (idx, record) in records.iter().enumerate() {
        by_template.entry(&record.template_name).or_default().push((idx, record));
    }

    let mut result = SplitResult::default();
    for (template, mut group) in by_template {
        let n = group.len();
        let test_n = config.test_count(n);
        // ties (byte-identical records) fall back to input order
        group.sort_by_key(|(idx, record)| (shuffle_key(config.seed, template, record), *idx));
        for (i, (_, record)) in group.into_iter().enumerate() {
            if i < test_n {
                result.test.push((*record).clone());
            } else {
                result.train.push((*record).clone());
            }
        }
        result.per_template_counts.insert(template.to_owned(), (n - test_n, test_n));
    }
    result
}

/// Stable identifiers for the test records: `template#k` in test order.
pub fn test_record_ids(result: &SplitResult) -> Vec<String> {
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    result
        .test
        .iter()
        .map(|record| {
            let k = counters.entry(record.template_name.as_str()).or_insert(0);
            let id = format!("{}#{}", record.template_name, *k);
            *k += 1;
            id
        })
        .collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExportError {
    #[error("write failed")]
    Write,
    #[error("record {index}: query contains the closing code fence and cannot be represented")]
    QueryFenceCollision { index: usize },
    #[error("record {index}: utterance contains the answer sentinel and cannot be represented")]
    UtteranceSentinelCollision { index: usize },
}

impl From<core::fmt::Error> for ExportError {
    fn from(_: core::fmt::Error) -> Self {
        ExportError::Write
    }
}

/// Writes one JSON object per line with exactly the keys `utterance`,
/// `template_name`, `query`. Returns the record count.
pub fn export_jsonl(records: &[DatasetRecord], sink: &mut dyn core::fmt::Write) -> Result<usize, ExportError> {
    for record in records {
        let line = serde_json::to_string(record).map_err(|_| ExportError::Write)?;
        sink.write_str(&line)?;
        sink.write_char('\n')?;
    }
    Ok(records.len())
}

/// Reads JSONL records, ignoring blank lines.
pub fn import_jsonl(text: &str) -> Result<Vec<DatasetRecord>, String> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", idx + 1))?;
        out.push(record);
    }
    Ok(out)
}

const QUESTION_PREFIX: &str = "question: ";
const ANSWER_SENTINEL: &str = " answer: <code>";
const CODE_CLOSE: &str = "</code>";

/// Serializes records as `question: {utterance} answer: <code>{query}</code>`
/// with a newline separator; query-internal newlines are preserved verbatim.
pub fn export_training_text(records: &[DatasetRecord], sink: &mut dyn core::fmt::Write) -> Result<usize, ExportError> {
    for (index, record) in records.iter().enumerate() {
        if record.query.contains(CODE_CLOSE) {
            return Err(ExportError::QueryFenceCollision { index });
        }
        if record.utterance.contains(ANSWER_SENTINEL) {
            return Err(ExportError::UtteranceSentinelCollision { index });
        }
        sink.write_str(QUESTION_PREFIX)?;
        sink.write_str(&record.utterance)?;
        sink.write_str(ANSWER_SENTINEL)?;
        sink.write_str(&record.query)?;
        sink.write_str(CODE_CLOSE)?;
        sink.write_char('\n')?;
    }
    Ok(records.len())
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrainingTextError {
    #[error("offset {0}: expected record to start with the question prefix")]
    MissingQuestion(usize),
    #[error("offset {0}: missing answer sentinel")]
    MissingAnswer(usize),
    #[error("offset {0}: missing closing code fence")]
    MissingClose(usize),
}

/// Inverse of [`export_training_text`]: recovers (utterance, query) pairs.
pub fn parse_training_text(text: &str) -> Result<Vec<(String, String)>, TrainingTextError> {
    let mut out = Vec::new();
    let mut rest = text;
    let mut offset = 0;
    loop {
        while let Some(stripped) = rest.strip_prefix('\n') {
            rest = stripped;
            offset += 1;
        }
        if rest.is_empty() {
            return Ok(out);
        }
        let body = rest.strip_prefix(QUESTION_PREFIX).ok_or(TrainingTextError::MissingQuestion(offset))?;
        let answer_at = body.find(ANSWER_SENTINEL).ok_or(TrainingTextError::MissingAnswer(offset))?;
        let utterance = &body[..answer_at];
        let query_body = &body[answer_at + ANSWER_SENTINEL.len()..];
        let close_at = query_body.find(CODE_CLOSE).ok_or(TrainingTextError::MissingClose(offset))?;
        let query = &query_body[..close_at];
        out.push((utterance.to_owned(), query.to_owned()));
        let consumed = QUESTION_PREFIX.len() + answer_at + ANSWER_SENTINEL.len() + close_at + CODE_CLOSE.len();
        rest = &rest[consumed..];
        offset += consumed;
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {template}: need {needed} examples, have {available}")]
    InsufficientExamples { template: String, needed: usize, available: usize },
}

/// Builds a few-shot prompt: numbered `Utterance i:` / `SPARQL i:` example
/// blocks sampled from the template's training records, then `Utterance:`
/// and the target. Sampling is a seeded hash shuffle, deterministic per
/// (seed, template).
pub fn build_fewshot_prompt(
    template_id: &str,
    train: &[DatasetRecord],
    target_utterance: &str,
    n_examples: usize,
    seed: u64,
) -> Result<String, PromptError> {
    let mut candidates: Vec<&DatasetRecord> = train.iter().filter(|r| r.template_name == template_id).collect();
    if candidates.len() < n_examples {
        return Err(PromptError::InsufficientExamples {
            template: template_id.to_owned(),
            needed: n_examples,
            available: candidates.len(),
        });
    }
    candidates.sort_by_key(|record| splitmix64(hash_parts(seed, &["prompt", template_id]) ^ record_hash(record)));

    let mut blocks: Vec<String> = Vec::with_capacity(n_examples + 1);
    for (i, record) in candidates.iter().take(n_examples).enumerate() {
        blocks.push(format!(
            "Utterance {n}:\n{u}\nSPARQL {n}:\n{q}",
            n = i + 1,
            u = record.utterance,
            q = record.query
        ));
    }
    blocks.push(format!("Utterance:\n{target_utterance}"));
    Ok(blocks.join("\n\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn record(template: &str, k: usize) -> DatasetRecord {
        DatasetRecord {
            utterance: format!("utterance {template} {k}"),
            template_name: template.to_owned(),
            query: format!("SELECT ?lexeme WHERE {{ ?lexeme wikibase:lemma 'w{k}'@en }}"),
        }
    }

    fn corpus(sizes: &[(&str, usize)]) -> Vec<DatasetRecord> {
        sizes.iter().flat_map(|(t, n)| (0..*n).map(move |k| record(t, k))).collect()
    }

    #[test]
    fn split_counts_follow_the_rule() {
        let config = SplitConfig::default();
        assert_eq!(config.test_count(29_922), 20);
        assert_eq!(config.test_count(1), 1);
        assert_eq!(config.test_count(100), 10);
        assert_eq!(config.test_count(5), 1);
        assert_eq!(config.test_count(199), 19);
        assert_eq!(config.test_count(200), 20);
        assert_eq!(config.test_count(2000), 20);
    }

    #[test]
    fn split_partitions_and_counts() {
        let records = corpus(&[("a", 100), ("b", 1), ("c", 5)]);
        let result = split(&records, &SplitConfig::with_seed(7));
        assert_eq!(result.per_template_counts["a"], (90, 10));
        assert_eq!(result.per_template_counts["b"], (0, 1));
        assert_eq!(result.per_template_counts["c"], (4, 1));
        assert_eq!(result.train.len() + result.test.len(), records.len());
        // partition: every record on exactly one side
        let mut all: Vec<&DatasetRecord> = result.train.iter().chain(result.test.iter()).collect();
        all.sort_by_key(|r| (&r.template_name, &r.utterance));
        let mut input: Vec<&DatasetRecord> = records.iter().collect();
        input.sort_by_key(|r| (&r.template_name, &r.utterance));
        assert_eq!(all, input);
    }

    #[test]
    fn split_is_deterministic_and_order_insensitive() {
        let records = corpus(&[("a", 50), ("b", 30)]);
        let first = split(&records, &SplitConfig::with_seed(3));
        let second = split(&records, &SplitConfig::with_seed(3));
        assert_eq!(first, second);

        let mut reversed: Vec<DatasetRecord> = records.clone();
        reversed.reverse();
        let third = split(&reversed, &SplitConfig::with_seed(3));
        let ids = |r: &SplitResult| {
            let mut v: Vec<String> = r.test.iter().map(|x| x.utterance.clone()).collect();
            v.sort();
            v
        };
        assert_eq!(ids(&first), ids(&third));

        let other_seed = split(&records, &SplitConfig::with_seed(4));
        assert_eq!(first.per_template_counts, other_seed.per_template_counts);
    }

    #[test]
    fn test_ids_are_stable_per_template() {
        let records = corpus(&[("a", 30), ("b", 10)]);
        let result = split(&records, &SplitConfig::with_seed(1));
        let ids = test_record_ids(&result);
        assert_eq!(ids.len(), result.test.len());
        assert_eq!(ids.iter().filter(|i| i.starts_with("a#")).count(), 3);
        assert!(ids.contains(&"a#0".to_string()));
        assert!(ids.contains(&"b#0".to_string()));
    }

    #[test]
    fn jsonl_round_trip_and_key_order() {
        let records = vec![
            record("a", 0),
            DatasetRecord {
                utterance: "multi\nline?".into(),
                template_name: "a".into(),
                query: "SELECT ?x\nWHERE { }".into(),
            },
        ];
        let mut out = String::new();
        assert_eq!(export_jsonl(&records, &mut out).unwrap(), 2);
        assert_eq!(out.lines().count(), 2);
        let first_line = out.lines().next().unwrap();
        let u = first_line.find("\"utterance\"").unwrap();
        let t = first_line.find("\"template_name\"").unwrap();
        let q = first_line.find("\"query\"").unwrap();
        assert!(u < t && t < q, "fixed key order");
        assert_eq!(import_jsonl(&out).unwrap(), records);
    }

    #[test]
    fn empty_exports() {
        let mut out = String::new();
        assert_eq!(export_jsonl(&[], &mut out).unwrap(), 0);
        assert!(out.is_empty());
        assert_eq!(export_training_text(&[], &mut out).unwrap(), 0);
        assert!(out.is_empty());
    }

    #[test]
    fn training_text_format_and_inverse() {
        let records = vec![
            DatasetRecord {
                utterance: "What is the gender of Apfel in German?".into(),
                template_name: "t1_P5185".into(),
                query: "SELECT ?lexeme ?qitem ?lemma ?qitemLabel\nWHERE\n{\n  VALUES ?lemma {'Apfel'@de} .\n  ?lexeme wikibase:lemma ?lemma ;\n          wdt:P5185 ?qitem.\n  SERVICE wikibase:label {\n    bd:serviceParam wikibase:language 'en'\n  }\n}".into(),
            },
            record("b", 1),
        ];
        let mut out = String::new();
        assert_eq!(export_training_text(&records, &mut out).unwrap(), 2);
        assert!(out.starts_with("question: What is the gender of Apfel in German? answer: <code>SELECT ?lexeme"));
        let recovered = parse_training_text(&out).unwrap();
        assert_eq!(recovered.len(), 2);
        assert_eq!(recovered[0].0, records[0].utterance);
        assert_eq!(recovered[0].1, records[0].query);
        assert_eq!(recovered[1].1, records[1].query);
    }

    #[test]
    fn training_text_rejects_sentinel_collisions() {
        let bad = DatasetRecord { utterance: "x".into(), template_name: "t".into(), query: "SELECT '</code>'".into() };
        let mut out = String::new();
        assert_eq!(export_training_text(&[bad], &mut out).unwrap_err(), ExportError::QueryFenceCollision { index: 0 });
    }

    #[test]
    fn fewshot_prompt_layout() {
        let train = vec![
            DatasetRecord { utterance: "Apfel gender in German".into(), template_name: "t1_P5185".into(), query: "Q1".into() },
            DatasetRecord { utterance: "medailon gender Czech".into(), template_name: "t1_P5185".into(), query: "Q2".into() },
        ];
        // with exactly two candidates both appear; their order is seed-driven
        let prompt = build_fewshot_prompt("t1_P5185", &train, "What is Probekörpers gender in German?", 2, 5).unwrap();
        let expected_a = "Utterance 1:\nApfel gender in German\nSPARQL 1:\nQ1\n\nUtterance 2:\nmedailon gender Czech\nSPARQL 2:\nQ2\n\nUtterance:\nWhat is Probekörpers gender in German?";
        let expected_b = "Utterance 1:\nmedailon gender Czech\nSPARQL 1:\nQ2\n\nUtterance 2:\nApfel gender in German\nSPARQL 2:\nQ1\n\nUtterance:\nWhat is Probekörpers gender in German?";
        assert!(prompt == expected_a || prompt == expected_b);
        assert_eq!(
            prompt,
            build_fewshot_prompt("t1_P5185", &train, "What is Probekörpers gender in German?", 2, 5).unwrap()
        );
    }

    #[test]
    fn zero_shot_prompt_is_target_only() {
        let prompt = build_fewshot_prompt("t", &[], "Just this?", 0, 1).unwrap();
        assert_eq!(prompt, "Utterance:\nJust this?");
    }

    #[test]
    fn insufficient_examples_error() {
        let train = vec![record("t", 0)];
        let err = build_fewshot_prompt("t", &train, "x", 2, 1).unwrap_err();
        assert_eq!(err, PromptError::InsufficientExamples { template: "t".into(), needed: 2, available: 1 });
    }
}
