//! A small regular-expression matcher covering the patterns the rule-based
//! templates use: literals, `^`/`$` anchors, `.`, character classes, and the
//! `*`/`+`/`?` quantifiers on single atoms, plus the `i` flag. Anything
//! beyond that reports the offending construct so the evaluator can surface
//! an unsupported-feature error.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Atom {
    Literal(char),
    Any,
    Class { negated: bool, singles: Vec<char>, ranges: Vec<(char, char)> },
}

impl Atom {
    fn matches(&self, c: char, case_insensitive: bool) -> bool {
        let eq = |a: char, b: char| {
            if case_insensitive {
                a.to_lowercase().eq(b.to_lowercase())
            } else {
                a == b
            }
        };
        match self {
            Atom::Literal(l) => eq(*l, c),
            Atom::Any => true,
            Atom::Class { negated, singles, ranges } => {
                let c_norm = if case_insensitive { c.to_ascii_lowercase() } else { c };
                let mut hit = singles.iter().any(|s| eq(*s, c));
                if !hit {
                    hit = ranges.iter().any(|(lo, hi)| {
                        let (lo, hi) = if case_insensitive {
                            (lo.to_ascii_lowercase(), hi.to_ascii_lowercase())
                        } else {
                            (*lo, *hi)
                        };
                        (lo..=hi).contains(&c_norm)
                    });
                }
                hit != *negated
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Repeat {
    One,
    ZeroOrOne,
    ZeroOrMore,
    OneOrMore,
}

#[derive(Debug, Clone)]
pub struct RegexLite {
    atoms: Vec<(Atom, Repeat)>,
    anchor_start: bool,
    anchor_end: bool,
    case_insensitive: bool,
}

impl RegexLite {
    /// Compiles `pattern`. Returns the unsupported construct's name on
    /// anything outside the subset.
    pub fn compile(pattern: &str, flags: &str) -> Result<Self, String> {
        let mut case_insensitive = false;
        for f in flags.chars() {
            match f {
                'i' => case_insensitive = true,
                other => return Err(alloc::format!("regex flag {other:?}")),
            }
        }
        let mut chars = pattern.chars().peekable();
        let mut anchor_start = false;
        let mut anchor_end = false;
        let mut atoms: Vec<(Atom, Repeat)> = Vec::new();
        if chars.peek() == Some(&'^') {
            anchor_start = true;
            chars.next();
        }
        while let Some(c) = chars.next() {
            let atom = match c {
                '$' if chars.peek().is_none() => {
                    anchor_end = true;
                    break;
                }
                '.' => Atom::Any,
                '\\' => match chars.next() {
                    Some(esc) if !esc.is_alphanumeric() => Atom::Literal(esc),
                    Some(esc) => return Err(alloc::format!("regex escape \\{esc}")),
                    None => return Err("dangling backslash".to_string()),
                },
                '[' => {
                    let mut negated = false;
                    let mut singles = Vec::new();
                    let mut ranges = Vec::new();
                    if chars.peek() == Some(&'^') {
                        negated = true;
                        chars.next();
                    }
                    let mut closed = false;
                    let mut pending: Option<char> = None;
                    while let Some(cc) = chars.next() {
                        match cc {
                            ']' => {
                                closed = true;
                                break;
                            }
                            '\\' => {
                                if let Some(p) = pending.take() {
                                    singles.push(p);
                                }
                                match chars.next() {
                                    Some(esc) => pending = Some(esc),
                                    None => return Err("dangling backslash in class".to_string()),
                                }
                            }
                            '-' if pending.is_some() && chars.peek() != Some(&']') => {
                                let lo = pending.take().unwrap();
                                match chars.next() {
                                    Some(hi) => ranges.push((lo, hi)),
                                    None => return Err("unterminated class range".to_string()),
                                }
                            }
                            other => {
                                if let Some(p) = pending.take() {
                                    singles.push(p);
                                }
                                pending = Some(other);
                            }
                        }
                    }
                    if let Some(p) = pending.take() {
                        singles.push(p);
                    }
                    if !closed {
                        return Err("unterminated character class".to_string());
                    }
                    Atom::Class { negated, singles, ranges }
                }
                '(' | ')' | '|' | '{' | '}' => return Err(alloc::format!("regex construct {c:?}")),
                '*' | '+' | '?' => return Err(alloc::format!("dangling quantifier {c:?}")),
                literal => Atom::Literal(literal),
            };
            let repeat = match chars.peek() {
                Some('*') => {
                    chars.next();
                    Repeat::ZeroOrMore
                }
                Some('+') => {
                    chars.next();
                    Repeat::OneOrMore
                }
                Some('?') => {
                    chars.next();
                    Repeat::ZeroOrOne
                }
                _ => Repeat::One,
            };
            atoms.push((atom, repeat));
        }
        Ok(RegexLite { atoms, anchor_start, anchor_end, case_insensitive })
    }

    /// Partial-match semantics, like SPARQL `regex()`.
    pub fn is_match(&self, text: &str) -> bool {
        let chars: Vec<char> = text.chars().collect();
        if self.anchor_start {
            return self.match_from(&chars, 0);
        }
        (0..=chars.len()).any(|start| self.match_from(&chars, start))
    }

    fn match_from(&self, text: &[char], start: usize) -> bool {
        self.match_atoms(text, start, 0)
    }

    fn match_atoms(&self, text: &[char], pos: usize, atom_idx: usize) -> bool {
        if atom_idx == self.atoms.len() {
            return !self.anchor_end || pos == text.len();
        }
        let (atom, repeat) = &self.atoms[atom_idx];
        match repeat {
            Repeat::One => {
                pos < text.len()
                    && atom.matches(text[pos], self.case_insensitive)
                    && self.match_atoms(text, pos + 1, atom_idx + 1)
            }
            Repeat::ZeroOrOne => {
                self.match_atoms(text, pos, atom_idx + 1)
                    || (pos < text.len()
                        && atom.matches(text[pos], self.case_insensitive)
                        && self.match_atoms(text, pos + 1, atom_idx + 1))
            }
            Repeat::ZeroOrMore | Repeat::OneOrMore => {
                let min = if *repeat == Repeat::OneOrMore { 1 } else { 0 };
                let mut count = 0;
                // longest-first is unnecessary; any match suffices
                if min == 0 && self.match_atoms(text, pos, atom_idx + 1) {
                    return true;
                }
                let mut p = pos;
                while p < text.len() && atom.matches(text[p], self.case_insensitive) {
                    p += 1;
                    count += 1;
                    if count >= min && self.match_atoms(text, p, atom_idx + 1) {
                        return true;
                    }
                }
                false
            }
        }
    }
}

/// Escapes a literal string for embedding in a pattern.
pub fn escape_literal(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if "^$.[]*+?\\(){}|".contains(c) {
            out.push('\\');
        }
        out.push(c);
    }
    out
}
