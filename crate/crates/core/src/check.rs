//! SPARQL tokenizer and the structural check suite.
//!
//! The tokenizer is deliberately forgiving: any byte string produces a token
//! stream, with malformed pieces represented as in-band [`TokenKind::Error`]
//! tokens rather than failures. The checks are line-item structural tests run
//! on the token stream; the granularity ratio is passed checks over applicable
//! checks, as an exact rational.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use num_rational::Ratio;

/// Lexical class of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    /// Recognized SPARQL keyword (`SELECT`, `WHERE`, ...), case-insensitive.
    Keyword,
    /// `?name` or `$name`.
    Variable,
    /// `<...>` IRI reference.
    Iri,
    /// `prefix:local` name.
    PrefixedName,
    /// Quoted string literal, quotes included.
    Literal,
    /// `@tag` immediately following a literal.
    LanguageTag,
    BraceOpen,
    BraceClose,
    /// `(` or `)`.
    Paren,
    /// Single punctuation or operator character.
    Punctuation,
    /// Bare words, numbers, anything else that scanned cleanly.
    Other,
    /// Malformed input (e.g. an unterminated literal); never a panic.
    Error,
}

/// One token with its byte offset into the original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    pub offset: usize,
}

const KEYWORDS: &[&str] = &[
    "select", "ask", "where", "values", "filter", "optional", "service", "order", "by", "asc",
    "desc", "limit", "offset", "distinct", "reduced", "prefix", "base", "construct", "describe",
    "union", "minus", "graph", "bind", "group", "having", "not", "exists", "in", "as", "str",
    "strlen", "regex", "lang", "contains", "count", "insert", "delete",
];

fn is_keyword(word: &str) -> bool {
    KEYWORDS.iter().any(|k| word.eq_ignore_ascii_case(k))
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

/// Tokenizes SPARQL text. Whitespace and `#` comments become gaps between
/// tokens; every token's `text` is the exact input slice at `offset`.
pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let bytes = text.as_bytes();
    let mut chars = text.char_indices().peekable();

    while let Some((start, c)) = chars.next() {
        match c {
            ws if ws.is_whitespace() => {}
            '#' => {
                // comment to end of line
                for (_, cc) in chars.by_ref() {
                    if cc == '\n' {
                        break;
                    }
                }
            }
            '{' => tokens.push(Token { kind: TokenKind::BraceOpen, text: &text[start..start + 1], offset: start }),
            '}' => tokens.push(Token { kind: TokenKind::BraceClose, text: &text[start..start + 1], offset: start }),
            '(' | ')' => tokens.push(Token { kind: TokenKind::Paren, text: &text[start..start + 1], offset: start }),
            '?' | '$' => {
                let end = scan_while(text, start + 1, is_name_char);
                if end > start + 1 {
                    tokens.push(Token { kind: TokenKind::Variable, text: &text[start..end], offset: start });
                    advance_to(&mut chars, end);
                } else {
                    tokens.push(Token { kind: TokenKind::Punctuation, text: &text[start..start + c.len_utf8()], offset: start });
                }
            }
            '\'' | '"' => {
                let (end, terminated) = scan_literal(text, start, c);
                let kind = if terminated { TokenKind::Literal } else { TokenKind::Error };
                tokens.push(Token { kind, text: &text[start..end], offset: start });
                advance_to(&mut chars, end);
            }
            '@' => {
                let end = scan_while(text, start + 1, |c| c.is_ascii_alphanumeric() || c == '-');
                if end > start + 1 {
                    tokens.push(Token { kind: TokenKind::LanguageTag, text: &text[start..end], offset: start });
                    advance_to(&mut chars, end);
                } else {
                    tokens.push(Token { kind: TokenKind::Punctuation, text: &text[start..start + 1], offset: start });
                }
            }
            '<' => {
                // IRI if it closes with '>' before any whitespace
                let mut end = None;
                let mut pos = start + 1;
                for ch in text[start + 1..].chars() {
                    if ch == '>' {
                        end = Some(pos + 1);
                        break;
                    }
                    if ch.is_whitespace() {
                        break;
                    }
                    pos += ch.len_utf8();
                }
                if let Some(end) = end {
                    tokens.push(Token { kind: TokenKind::Iri, text: &text[start..end], offset: start });
                    advance_to(&mut chars, end);
                } else {
                    tokens.push(Token { kind: TokenKind::Punctuation, text: &text[start..start + 1], offset: start });
                }
            }
            c if c.is_alphanumeric() || c == '_' => {
                let mut end = scan_while(text, start, is_name_char);
                // prefixed name: name ':' local (local may be empty, e.g. in a
                // PREFIX declaration)
                let mut kind = if is_keyword(&text[start..end]) { TokenKind::Keyword } else { TokenKind::Other };
                if end < bytes.len() && bytes[end] == b':' {
                    let local_end = scan_while(text, end + 1, is_name_char);
                    end = local_end;
                    kind = TokenKind::PrefixedName;
                }
                tokens.push(Token { kind, text: &text[start..end], offset: start });
                advance_to(&mut chars, end);
            }
            ':' => {
                // prefixed name with empty prefix, e.g. `:local`
                let end = scan_while(text, start + 1, is_name_char);
                let kind = if end > start + 1 { TokenKind::PrefixedName } else { TokenKind::Punctuation };
                tokens.push(Token { kind, text: &text[start..end], offset: start });
                advance_to(&mut chars, end);
            }
            other => {
                let end = start + other.len_utf8();
                tokens.push(Token { kind: TokenKind::Punctuation, text: &text[start..end], offset: start });
            }
        }
    }
    tokens
}

fn scan_while(text: &str, from: usize, pred: impl Fn(char) -> bool) -> usize {
    let mut end = from;
    for c in text[from..].chars() {
        if pred(c) {
            end += c.len_utf8();
        } else {
            break;
        }
    }
    end
}

/// Scans a quoted literal with backslash escapes. Returns (end, terminated).
fn scan_literal(text: &str, start: usize, quote: char) -> (usize, bool) {
    let mut iter = text[start + quote.len_utf8()..].char_indices();
    let base = start + quote.len_utf8();
    while let Some((i, c)) = iter.next() {
        if c == '\\' {
            iter.next();
        } else if c == quote {
            return (base + i + quote.len_utf8(), true);
        }
    }
    (text.len(), false)
}

fn advance_to(chars: &mut core::iter::Peekable<core::str::CharIndices>, end: usize) {
    while let Some(&(i, _)) = chars.peek() {
        if i < end {
            chars.next();
        } else {
            break;
        }
    }
}

/// The seven structural checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckId {
    /// C1: first significant token is SELECT or ASK.
    StartsWithQueryForm,
    /// C2: a SELECT query projects at least one `?variable` before WHERE.
    SelectProjectsVariable,
    /// C3: an ASK query is followed directly by WHERE (or `{`).
    AskFollowedByWhere,
    /// C4: every `{` has a matching `}`.
    BracesBalanced,
    /// C5: the VALUES keyword is absent.
    NoValuesKeyword,
    /// C6: at least one known variable is present (case-insensitive).
    UsesKnownVariable,
    /// C7: no Q-item outside the known set.
    OnlyKnownQItems,
}

impl CheckId {
    pub const ALL: [CheckId; 7] = [
        CheckId::StartsWithQueryForm,
        CheckId::SelectProjectsVariable,
        CheckId::AskFollowedByWhere,
        CheckId::BracesBalanced,
        CheckId::NoValuesKeyword,
        CheckId::UsesKnownVariable,
        CheckId::OnlyKnownQItems,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            CheckId::StartsWithQueryForm => "starts_with_query_form",
            CheckId::SelectProjectsVariable => "select_projects_variable",
            CheckId::AskFollowedByWhere => "ask_followed_by_where",
            CheckId::BracesBalanced => "braces_balanced",
            CheckId::NoValuesKeyword => "no_values_keyword",
            CheckId::UsesKnownVariable => "uses_known_variable",
            CheckId::OnlyKnownQItems => "only_known_qitems",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckOutcome {
    Pass,
    Fail,
    NotApplicable,
}

/// Configuration for a check run.
#[derive(Debug, Clone)]
pub struct CheckProfile {
    pub enabled: BTreeSet<CheckId>,
    /// Compared case-insensitively, stored without the `?` sigil.
    pub known_variables: BTreeSet<String>,
    /// Bare Q-identifiers (`Q123`) the query may mention.
    pub known_qitems: BTreeSet<String>,
    /// Skip PREFIX declarations before applying C1.
    pub allow_prefix_prologue: bool,
}

const DEFAULT_KNOWN_VARIABLES: &[&str] = &["lexeme", "lemma", "form", "sense", "qitem", "qitemlabel"];

impl CheckProfile {
    /// All seven checks; the profile used to score model output.
    pub fn full() -> Self {
        CheckProfile {
            enabled: CheckId::ALL.iter().copied().collect(),
            known_variables: DEFAULT_KNOWN_VARIABLES.iter().map(|v| String::from(*v)).collect(),
            known_qitems: BTreeSet::new(),
            allow_prefix_prologue: false,
        }
    }

    /// C1-C4 and C6, for linting gold queries (which legitimately contain
    /// VALUES clauses and Q-items from their population bindings).
    pub fn gold_lint() -> Self {
        let mut profile = Self::full();
        profile.enabled.remove(&CheckId::NoValuesKeyword);
        profile.enabled.remove(&CheckId::OnlyKnownQItems);
        profile
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "full" => Some(Self::full()),
            "gold" | "gold_lint" => Some(Self::gold_lint()),
            _ => None,
        }
    }

    pub fn with_known_qitems(mut self, qitems: impl IntoIterator<Item = String>) -> Self {
        self.known_qitems.extend(qitems);
        self
    }
}

impl Default for CheckProfile {
    fn default() -> Self {
        Self::full()
    }
}

/// Per-check outcomes plus the pass/applicable tally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckReport {
    pub results: BTreeMap<CheckId, CheckOutcome>,
    pub c_pass: u32,
    pub c_all: u32,
}

impl CheckReport {
    /// Passed checks over applicable checks; 0 when nothing was applicable.
    pub fn ratio(&self) -> Ratio<u32> {
        granularity_ratio(self)
    }
}

/// `c_pass / c_all`, with the stated convention that an empty denominator
/// yields zero.
pub fn granularity_ratio(report: &CheckReport) -> Ratio<u32> {
    if report.c_all == 0 {
        Ratio::new(0, 1)
    } else {
        Ratio::new(report.c_pass, report.c_all)
    }
}

/// Extracts every bare Q-identifier mentioned by a token: a standalone
/// `Q123`, the local part of a prefixed name, or the trailing segment of an
/// IRI.
fn qitem_of<'t>(token: &'t Token<'_>) -> Option<&'t str> {
    let candidate = match token.kind {
        TokenKind::Other => token.text,
        TokenKind::PrefixedName => token.text.rsplit(':').next().unwrap_or(""),
        TokenKind::Iri => {
            let inner = token.text.trim_start_matches('<').trim_end_matches('>');
            inner.rsplit(|c| c == '/' || c == '#').next().unwrap_or("")
        }
        _ => return None,
    };
    let mut cs = candidate.chars();
    if cs.next() == Some('Q') && candidate.len() > 1 && cs.all(|c| c.is_ascii_digit()) {
        Some(candidate)
    } else {
        None
    }
}

fn kw(token: &Token<'_>, word: &str) -> bool {
    token.kind == TokenKind::Keyword && token.text.eq_ignore_ascii_case(word)
}

/// Runs the enabled checks on `text`. Never fails: any byte string yields a
/// report. Inapplicable checks are excluded from the denominator.
pub fn run_checks(text: &str, profile: &CheckProfile) -> CheckReport {
    let tokens = tokenize(text);

    // C1 context: the first significant token, optionally skipping a PREFIX
    // prologue (each declaration is PREFIX name: <iri>).
    let mut first = 0usize;
    if profile.allow_prefix_prologue {
        while first < tokens.len() && kw(&tokens[first], "prefix") {
            let mut j = first + 1;
            while j < tokens.len()
                && matches!(tokens[j].kind, TokenKind::PrefixedName | TokenKind::Iri | TokenKind::Punctuation)
            {
                j += 1;
            }
            first = j;
        }
    }
    let head = tokens.get(first);
    let starts_select = head.map(|t| kw(t, "select")).unwrap_or(false);
    let starts_ask = head.map(|t| kw(t, "ask")).unwrap_or(false);

    let mut results = BTreeMap::new();
    for &id in &CheckId::ALL {
        if !profile.enabled.contains(&id) {
            continue;
        }
        let outcome = match id {
            CheckId::StartsWithQueryForm => {
                if starts_select || starts_ask {
                    CheckOutcome::Pass
                } else {
                    CheckOutcome::Fail
                }
            }
            CheckId::SelectProjectsVariable => {
                if !starts_select {
                    CheckOutcome::NotApplicable
                } else {
                    let has_var = tokens[first + 1..]
                        .iter()
                        .take_while(|t| !kw(t, "where"))
                        .any(|t| t.kind == TokenKind::Variable);
                    if has_var {
                        CheckOutcome::Pass
                    } else {
                        CheckOutcome::Fail
                    }
                }
            }
            CheckId::AskFollowedByWhere => {
                if !starts_ask {
                    CheckOutcome::NotApplicable
                } else {
                    // WHERE directly after ASK; a bare group `ASK { ... }` is
                    // the equivalent legal prologue and also accepted.
                    match tokens.get(first + 1) {
                        Some(t) if kw(t, "where") || t.kind == TokenKind::BraceOpen => CheckOutcome::Pass,
                        _ => CheckOutcome::Fail,
                    }
                }
            }
            CheckId::BracesBalanced => {
                let mut depth: i64 = 0;
                let mut ok = true;
                for t in &tokens {
                    match t.kind {
                        TokenKind::BraceOpen => depth += 1,
                        TokenKind::BraceClose => {
                            depth -= 1;
                            if depth < 0 {
                                ok = false;
                                break;
                            }
                        }
                        _ => {}
                    }
                }
                if ok && depth == 0 {
                    CheckOutcome::Pass
                } else {
                    CheckOutcome::Fail
                }
            }
            CheckId::NoValuesKeyword => {
                if tokens.iter().any(|t| kw(t, "values")) {
                    CheckOutcome::Fail
                } else {
                    CheckOutcome::Pass
                }
            }
            CheckId::UsesKnownVariable => {
                let found = tokens.iter().any(|t| {
                    t.kind == TokenKind::Variable
                        && profile
                            .known_variables
                            .iter()
                            .any(|k| t.text[1..].eq_ignore_ascii_case(k))
                });
                if found {
                    CheckOutcome::Pass
                } else {
                    CheckOutcome::Fail
                }
            }
            CheckId::OnlyKnownQItems => {
                let unknown = tokens
                    .iter()
                    .filter_map(qitem_of)
                    .any(|q| !profile.known_qitems.contains(q));
                if unknown {
                    CheckOutcome::Fail
                } else {
                    CheckOutcome::Pass
                }
            }
        };
        results.insert(id, outcome);
    }

    let c_pass = results.values().filter(|o| **o == CheckOutcome::Pass).count() as u32;
    let c_all = results.values().filter(|o| **o != CheckOutcome::NotApplicable).count() as u32;
    CheckReport { results, c_pass, c_all }
}

/// Q-identifiers mentioned anywhere in `text`, for building per-record known
/// sets from gold queries.
pub fn extract_qitems(text: &str) -> BTreeSet<String> {
    tokenize(text).iter().filter_map(qitem_of).map(|q| q.to_owned()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn kinds(text: &str) -> Vec<TokenKind> {
        tokenize(text).iter().map(|t| t.kind).collect()
    }

    #[test]
    fn tokenizes_values_clause() {
        let toks = tokenize("VALUES ?lemma {'Apfel'@de}");
        let got: Vec<(TokenKind, &str)> = toks.iter().map(|t| (t.kind, t.text)).collect();
        assert_eq!(
            got,
            vec![
                (TokenKind::Keyword, "VALUES"),
                (TokenKind::Variable, "?lemma"),
                (TokenKind::BraceOpen, "{"),
                (TokenKind::Literal, "'Apfel'"),
                (TokenKind::LanguageTag, "@de"),
                (TokenKind::BraceClose, "}"),
            ]
        );
    }

    #[test]
    fn empty_input_yields_no_tokens() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn unterminated_literal_is_error_token() {
        let toks = tokenize("'unterminated");
        assert_eq!(toks.len(), 1);
        assert_eq!(toks[0].kind, TokenKind::Error);
        assert_eq!(toks[0].text, "'unterminated");
    }

    #[test]
    fn escapes_inside_literals() {
        let toks = tokenize(r"'l\'eau'@fr");
        assert_eq!(toks[0].kind, TokenKind::Literal);
        assert_eq!(toks[0].text, r"'l\'eau'");
        assert_eq!(toks[1].kind, TokenKind::LanguageTag);
    }

    #[test]
    fn prefixed_names_and_trailing_dot() {
        let toks = tokenize("wdt:P5185 ?qitem.");
        assert_eq!(toks[0].kind, TokenKind::PrefixedName);
        assert_eq!(toks[0].text, "wdt:P5185");
        assert_eq!(toks[1].kind, TokenKind::Variable);
        assert_eq!(toks[2].kind, TokenKind::Punctuation);
        assert_eq!(toks[2].text, ".");
    }

    #[test]
    fn comments_are_gaps() {
        let toks = tokenize("SELECT # Q999 hidden\n?x");
        assert_eq!(kinds("SELECT # hidden\n?x"), vec![TokenKind::Keyword, TokenKind::Variable]);
        assert!(!toks.iter().any(|t| t.text.contains("Q999")));
    }

    #[test]
    fn iri_versus_less_than() {
        let toks = tokenize("<http://www.wikidata.org/entity/Q42> FILTER(?a < 5)");
        assert_eq!(toks[0].kind, TokenKind::Iri);
        assert!(toks.iter().any(|t| t.kind == TokenKind::Punctuation && t.text == "<"));
    }

    const FIGURE_QUERY: &str = "SELECT ?lexeme ?qitem ?lemma ?qitemLabel\nWHERE\n{\n  VALUES ?lemma {'Apfel'@de} .\n  ?lexeme wikibase:lemma ?lemma ;\n          wdt:P5185 ?qitem.\n  SERVICE wikibase:label {\n    bd:serviceParam wikibase:language 'en'\n  }\n}";

    #[test]
    fn gender_query_scores_five_of_six() {
        let report = run_checks(FIGURE_QUERY, &CheckProfile::full());
        assert_eq!(report.results[&CheckId::StartsWithQueryForm], CheckOutcome::Pass);
        assert_eq!(report.results[&CheckId::SelectProjectsVariable], CheckOutcome::Pass);
        assert_eq!(report.results[&CheckId::AskFollowedByWhere], CheckOutcome::NotApplicable);
        assert_eq!(report.results[&CheckId::BracesBalanced], CheckOutcome::Pass);
        assert_eq!(report.results[&CheckId::NoValuesKeyword], CheckOutcome::Fail);
        assert_eq!(report.results[&CheckId::UsesKnownVariable], CheckOutcome::Pass);
        assert_eq!(report.results[&CheckId::OnlyKnownQItems], CheckOutcome::Pass);
        assert_eq!(report.ratio(), Ratio::new(5, 6));
    }

    #[test]
    fn valid_ask_scores_one() {
        let report = run_checks("ASK WHERE { ?lexeme wikibase:lemma 'x'@en }", &CheckProfile::full());
        assert_eq!(report.ratio(), Ratio::new(1, 1));
        assert_eq!(report.c_all, 6);
    }

    #[test]
    fn empty_string_scores_three_of_five() {
        let report = run_checks("", &CheckProfile::full());
        assert_eq!(report.results[&CheckId::StartsWithQueryForm], CheckOutcome::Fail);
        assert_eq!(report.results[&CheckId::BracesBalanced], CheckOutcome::Pass);
        assert_eq!(report.results[&CheckId::NoValuesKeyword], CheckOutcome::Pass);
        assert_eq!(report.results[&CheckId::UsesKnownVariable], CheckOutcome::Fail);
        assert_eq!(report.results[&CheckId::OnlyKnownQItems], CheckOutcome::Pass);
        assert_eq!(report.ratio(), Ratio::new(3, 5));
    }

    #[test]
    fn unknown_qitems_fail_c7() {
        let mut profile = CheckProfile::full();
        let report = run_checks("ASK { ?lexeme wdt:P5185 wd:Q499327 }", &profile);
        assert_eq!(report.results[&CheckId::OnlyKnownQItems], CheckOutcome::Fail);

        profile.known_qitems.insert(String::from("Q499327"));
        let report = run_checks("ASK { ?lexeme wdt:P5185 wd:Q499327 }", &profile);
        assert_eq!(report.results[&CheckId::OnlyKnownQItems], CheckOutcome::Pass);

        // bare and IRI forms count too
        let report = run_checks("ASK { ?lexeme ?p <http://www.wikidata.org/entity/Q7> }", &profile);
        assert_eq!(report.results[&CheckId::OnlyKnownQItems], CheckOutcome::Fail);
    }

    #[test]
    fn case_insensitive_query_form() {
        for q in ["select ?lexeme where { }", "Select ?lexeme Where { }", "SELECT ?lexeme WHERE { }"] {
            let report = run_checks(q, &CheckProfile::full());
            assert_eq!(report.results[&CheckId::StartsWithQueryForm], CheckOutcome::Pass, "{q}");
            assert_eq!(report.results[&CheckId::SelectProjectsVariable], CheckOutcome::Pass, "{q}");
        }
    }

    #[test]
    fn prefix_prologue_skipped_when_allowed() {
        let text = "PREFIX wdt: <http://www.wikidata.org/prop/direct/> SELECT ?lexeme WHERE { }";
        let strict = run_checks(text, &CheckProfile::full());
        assert_eq!(strict.results[&CheckId::StartsWithQueryForm], CheckOutcome::Fail);
        let mut lenient = CheckProfile::full();
        lenient.allow_prefix_prologue = true;
        let report = run_checks(text, &lenient);
        assert_eq!(report.results[&CheckId::StartsWithQueryForm], CheckOutcome::Pass);
    }

    #[test]
    fn ratio_conventions() {
        let report = CheckReport { results: BTreeMap::new(), c_pass: 5, c_all: 7 };
        assert_eq!(granularity_ratio(&report), Ratio::new(5, 7));
        let zero = CheckReport { results: BTreeMap::new(), c_pass: 0, c_all: 0 };
        assert_eq!(granularity_ratio(&zero), Ratio::new(0, 1));
    }

    #[test]
    fn gold_lint_profile_drops_c5_and_c7() {
        let report = run_checks(FIGURE_QUERY, &CheckProfile::gold_lint());
        assert_eq!(report.ratio(), Ratio::new(1, 1));
        assert_eq!(report.c_all, 4);
    }
}
