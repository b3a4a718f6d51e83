//! Corpus BLEU with mteval-13a tokenization, case preserved, no
//! effective-order reduction, exponential smoothing, up to 4-grams, scaled to
//! [0, 100]. Behaviour is pinned by oracle fixtures checked in before this
//! implementation was written.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

const MAX_NGRAM_ORDER: usize = 4;

fn in_punct_class(c: char) -> bool {
    // the 13a language-dependent class: ASCII punctuation except the
    // apostrophe, comma, period and dash (handled by later rules)
    matches!(c, '{'..='~' | '['..='`' | ' '..='&' | '('..='+' | ':'..='@' | '/')
}

/// Spaces around general punctuation.
fn rule_punct(input: &str) -> String {
    let mut out = String::with_capacity(input.len() * 2);
    for c in input.chars() {
        if in_punct_class(c) {
            out.push(' ');
            out.push(c);
            out.push(' ');
        } else {
            out.push(c);
        }
    }
    out
}

/// Period/comma splits off unless preceded by a digit. Mirrors a sequential
/// non-overlapping left-to-right substitution.
fn rule_dot_after(input: &str) -> String {
    let chars: Vec<char> = input.chars().collect();
    let mut out = String::with_capacity(input.len() * 2);
    let mut i = 0;
    while i < chars.len() {
        if i + 1 < chars.len() && !chars[i].is_ascii_digit() && matches!(chars[i + 1], '.' | ',') {
            out.push(chars[i]);
            out.push(' ');
            out.push(chars[i + 1]);
            out.push(' ');
            i += 2;
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

/// Period/comma splits off unless followed by a digit.
fn rule_dot_before(input: &str) -> String {
    let chars: Vec<char> = input.chars().collect();
    let mut out = String::with_capacity(input.len() * 2);
    let mut i = 0;
    while i < chars.len() {
        if i + 1 < chars.len() && matches!(chars[i], '.' | ',') && !chars[i + 1].is_ascii_digit() {
            out.push(' ');
            out.push(chars[i]);
            out.push(' ');
            out.push(chars[i + 1]);
            i += 2;
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

/// Dash splits off when preceded by a digit.
fn rule_digit_dash(input: &str) -> String {
    let chars: Vec<char> = input.chars().collect();
    let mut out = String::with_capacity(input.len() * 2);
    let mut i = 0;
    while i < chars.len() {
        if i + 1 < chars.len() && chars[i].is_ascii_digit() && chars[i + 1] == '-' {
            out.push(chars[i]);
            out.push(' ');
            out.push('-');
            out.push(' ');
            i += 2;
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

/// The mteval-13a tokenizer.
pub fn tokenize_13a(line: &str) -> Vec<String> {
    let mut line = line.replace("<skipped>", "");
    line = line.replace("-\n", "");
    line = line.replace('\n', " ");
    if line.contains('&') {
        line = line.replace("&quot;", "\"");
        line = line.replace("&amp;", "&");
        line = line.replace("&lt;", "<");
        line = line.replace("&gt;", ">");
    }
    let padded = alloc::format!(" {line} ");
    let staged = rule_digit_dash(&rule_dot_before(&rule_dot_after(&rule_punct(&padded))));
    staged.split_whitespace().map(str::to_owned).collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BleuError {
    #[error("candidate/reference length mismatch: {candidates} vs {references}")]
    LengthMismatch { candidates: usize, references: usize },
}

fn ngram_counts(tokens: &[String]) -> BTreeMap<Vec<&str>, usize> {
    let mut counts: BTreeMap<Vec<&str>, usize> = BTreeMap::new();
    for n in 1..=MAX_NGRAM_ORDER {
        if tokens.len() < n {
            break;
        }
        for window in tokens.windows(n) {
            let key: Vec<&str> = window.iter().map(String::as_str).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

fn safe_log(x: f64) -> f64 {
    if x == 0.0 {
        -9_999_999_999.0
    } else {
        libm::log(x)
    }
}

/// Corpus BLEU over single-reference pairs, in [0, 100].
pub fn bleu_corpus(candidates: &[String], references: &[String]) -> Result<f64, BleuError> {
    if candidates.len() != references.len() {
        return Err(BleuError::LengthMismatch { candidates: candidates.len(), references: references.len() });
    }
    let mut correct = [0usize; MAX_NGRAM_ORDER];
    let mut total = [0usize; MAX_NGRAM_ORDER];
    let mut sys_len = 0usize;
    let mut ref_len = 0usize;

    for (candidate, reference) in candidates.iter().zip(references) {
        let hyp = tokenize_13a(candidate.trim_end());
        let rf = tokenize_13a(reference.trim_end());
        sys_len += hyp.len();
        ref_len += rf.len();
        let ref_counts = ngram_counts(&rf);
        for (ngram, count) in ngram_counts(&hyp) {
            let order = ngram.len();
            let clipped = ref_counts.get(&ngram).copied().unwrap_or(0).min(count);
            correct[order - 1] += clipped;
        }
        for n in 1..=MAX_NGRAM_ORDER {
            total[n - 1] += (hyp.len() + 1).saturating_sub(n);
        }
    }

    let mut precisions = [0.0f64; MAX_NGRAM_ORDER];
    let mut smooth = 1.0f64;
    for n in 1..=MAX_NGRAM_ORDER {
        if total[n - 1] == 0 {
            break;
        }
        if correct[n - 1] == 0 {
            smooth *= 2.0;
            precisions[n - 1] = 100.0 / (smooth * total[n - 1] as f64);
        } else {
            precisions[n - 1] = 100.0 * correct[n - 1] as f64 / total[n - 1] as f64;
        }
    }

    let brevity_penalty = if sys_len < ref_len {
        if sys_len > 0 {
            libm::exp(1.0 - ref_len as f64 / sys_len as f64)
        } else {
            0.0
        }
    } else {
        1.0
    };

    let mean_log = precisions.iter().map(|p| safe_log(*p)).sum::<f64>() / MAX_NGRAM_ORDER as f64;
    Ok(brevity_penalty * libm::exp(mean_log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn toks(line: &str) -> Vec<String> {
        tokenize_13a(line)
    }

    #[test]
    fn tokenizer_separates_sparql_punctuation() {
        assert_eq!(
            toks("SELECT ?lexeme WHERE {'Apfel'@de}"),
            ["SELECT", "?", "lexeme", "WHERE", "{", "'Apfel'", "@", "de", "}"]
        );
    }

    #[test]
    fn tokenizer_digit_rules() {
        assert_eq!(toks("a,b.c 1,000.5 3-4 x-y"), ["a", ",", "b", ".", "c", "1,000.5", "3", "-", "4", "x-y"]);
        assert_eq!(toks("digits 42.5 end."), ["digits", "42.5", "end", "."]);
    }

    #[test]
    fn tokenizer_entities_and_skips() {
        assert_eq!(toks("&quot;q&amp;s&lt;t&gt;"), ["\"", "q", "&", "s", "<", "t", ">"]);
        assert_eq!(toks("one<skipped>two"), ["onetwo"]);
        assert_eq!(toks("hy-\nphen and new\nline"), ["hyphen", "and", "new", "line"]);
        assert!(toks("").is_empty());
        assert!(toks("   ").is_empty());
    }

    #[test]
    fn identity_corpus_scores_100() {
        let corpus = vec!["SELECT ?lexeme ?lemma WHERE { ?lexeme wikibase:lemma ?lemma . }".to_string()];
        let score = bleu_corpus(&corpus, &corpus).unwrap();
        assert!((score - 100.0).abs() < 1e-9, "{score}");
    }

    #[test]
    fn empty_candidate_scores_zero() {
        let score = bleu_corpus(&["".to_string()], &["SELECT ?x WHERE { }".to_string()]).unwrap();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert_eq!(
            bleu_corpus(&["a".to_string()], &[]).unwrap_err(),
            BleuError::LengthMismatch { candidates: 1, references: 0 }
        );
    }
}
