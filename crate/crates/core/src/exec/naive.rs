//! Brute-force reference evaluator and a seeded query generator, used only by
//! oracle-equivalence test suites (`oracle` feature).
//!
//! The reference path shares the parser with the engine but none of its
//! evaluation machinery: each triple pattern is expanded to the full set of
//! assignments over every snapshot triple, and sets are combined by pairwise
//! compatible-merge products. No binding-seeded matching, no indexes.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::hash::{hash_parts, pick_index, splitmix64};
use crate::rdf::{canonical_row, RdfTerm, ResultSet, Row, Snapshot};

use super::parse::{group_variables, parse_query, Constraint, Element, Group, OrderExpr, PatternTerm, Projection, Query, QueryForm, StrExpr};
use super::regexlite::RegexLite;
use super::ExecError;

/// Reference evaluation of `query` over `snapshot`.
pub fn execute_naive(query: &str, snapshot: &Snapshot) -> Result<ResultSet, ExecError> {
    let parsed = parse_query(query)?;
    naive_evaluate(&parsed, snapshot)
}

fn naive_evaluate(query: &Query, snapshot: &Snapshot) -> Result<ResultSet, ExecError> {
    let rows = naive_group(&query.group, snapshot)?;
    if query.form == QueryForm::Ask {
        return Ok(ResultSet::Boolean(!rows.is_empty()));
    }
    let mut rows = rows;
    if let Some(language) = &query.label_language {
        naive_labels(&mut rows, &query.projection, language, snapshot);
    }
    // independent re-implementation of the ordering rule: sort key tuples
    // computed up front, ties broken by full row serialization
    let mut keyed: Vec<(Vec<String>, String, Row)> = rows
        .into_iter()
        .map(|row| {
            let keys = query.order.iter().map(|k| naive_sort_key(&row, &k.expr, k.descending)).collect();
            (keys, canonical_row(&row), row)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let rows: Vec<Row> = keyed.into_iter().map(|(_, _, row)| row).collect();

    let rows: Vec<Row> = rows.into_iter().skip(query.offset.unwrap_or(0)).collect();
    let rows: Vec<Row> = match query.limit {
        Some(l) => rows.into_iter().take(l).collect(),
        None => rows,
    };

    let variables = match &query.projection {
        Projection::Star => group_variables(&query.group),
        Projection::Vars(vars) => vars.clone(),
    };
    let mut projected: Vec<Row> = rows
        .iter()
        .map(|row| variables.iter().filter_map(|v| row.get(v).map(|t| (v.clone(), t.clone()))).collect())
        .collect();
    if query.distinct {
        let mut seen = BTreeSet::new();
        projected.retain(|row| seen.insert(canonical_row(row)));
    }
    Ok(ResultSet::Bindings { variables, rows: projected })
}

/// Encodes a sort key as a string with order-preserving comparisons:
/// unbound < IRI < literal, STRLEN as zero-padded width. Descending keys are
/// complemented per-byte into an order-reversing encoding.
fn naive_sort_key(row: &Row, expr: &OrderExpr, descending: bool) -> String {
    let ascending = match expr {
        OrderExpr::Var(v) => match row.get(v) {
            None => "0".to_string(),
            Some(RdfTerm::Iri(iri)) => format!("1{iri}"),
            Some(t @ RdfTerm::Literal { .. }) => format!("2{}", t.canonical()),
        },
        OrderExpr::StrLen(e) => match row.get(e.var()) {
            None => "0".to_string(),
            Some(term) => format!("1{:010}", term.str_value().chars().count()),
        },
    };
    if descending {
        // order-reversing involution over the code points used above
        ascending.chars().map(|c| char::from_u32(0x0011_0000 - 1 - c as u32).unwrap_or('\0')).collect::<String>() + "\u{10FFFF}"
    } else {
        ascending
    }
}

fn compatible_merge(a: &Row, b: &Row) -> Option<Row> {
    let mut merged = a.clone();
    for (var, term) in b {
        match merged.get(var) {
            Some(existing) if existing != term => return None,
            Some(_) => {}
            None => {
                merged.insert(var.clone(), term.clone());
            }
        }
    }
    Some(merged)
}

fn naive_group(group: &Group, snapshot: &Snapshot) -> Result<Vec<Row>, ExecError> {
    let mut solutions: Vec<Row> = alloc::vec![Row::new()];
    let mut filters: Vec<&Constraint> = Vec::new();

    for element in &group.elements {
        match element {
            Element::Pattern(pattern) => {
                // full assignment set of this single pattern over every triple
                let mut candidates = Vec::new();
                for (s, p, o) in snapshot.triples() {
                    let mut row = Row::new();
                    let mut ok = true;
                    for (slot, term) in [(&pattern.subject, s), (&pattern.predicate, p), (&pattern.object, o)] {
                        match slot {
                            PatternTerm::Term(want) => {
                                if want != term {
                                    ok = false;
                                    break;
                                }
                            }
                            PatternTerm::Var(name) => match row.get(name.as_str()) {
                                Some(existing) if existing != term => {
                                    ok = false;
                                    break;
                                }
                                Some(_) => {}
                                None => {
                                    row.insert(name.clone(), term.clone());
                                }
                            },
                        }
                    }
                    if ok {
                        candidates.push(row);
                    }
                }
                solutions = product(&solutions, &candidates);
            }
            Element::Values { var, terms } => {
                let candidates: Vec<Row> = terms
                    .iter()
                    .map(|t| {
                        let mut row = Row::new();
                        row.insert(var.clone(), t.clone());
                        row
                    })
                    .collect();
                solutions = product(&solutions, &candidates);
            }
            Element::Optional(inner) => {
                let (inner_patterns, inner_filters) = split_filters(inner);
                let inner_rows = naive_group(&inner_patterns, snapshot)?;
                let mut tests = Vec::new();
                for f in &inner_filters {
                    tests.push(naive_constraint(f)?);
                }
                let mut next = Vec::new();
                for solution in &solutions {
                    let mut extended: Vec<Row> = inner_rows
                        .iter()
                        .filter_map(|b| compatible_merge(solution, b))
                        .collect();
                    extended.retain(|row| tests.iter().all(|t| t(row)));
                    if extended.is_empty() {
                        next.push(solution.clone());
                    } else {
                        next.append(&mut extended);
                    }
                }
                solutions = next;
            }
            Element::Filter(constraint) => filters.push(constraint),
        }
    }

    for constraint in filters {
        let test = naive_constraint(constraint)?;
        solutions.retain(|row| test(row));
    }
    Ok(solutions)
}

fn split_filters(group: &Group) -> (Group, Vec<Constraint>) {
    let mut elements = Vec::new();
    let mut filters = Vec::new();
    for e in &group.elements {
        match e {
            Element::Filter(c) => filters.push(c.clone()),
            other => elements.push(other.clone()),
        }
    }
    (Group { elements }, filters)
}

fn product(left: &[Row], right: &[Row]) -> Vec<Row> {
    let mut out = Vec::new();
    for a in left {
        for b in right {
            if let Some(merged) = compatible_merge(a, b) {
                out.push(merged);
            }
        }
    }
    out
}

type RowTest = alloc::boxed::Box<dyn Fn(&Row) -> bool>;

fn naive_constraint(constraint: &Constraint) -> Result<RowTest, ExecError> {
    match constraint {
        Constraint::Eq { expr, value } => {
            let expr = expr.clone();
            let value = value.clone();
            Ok(alloc::boxed::Box::new(move |row| match (row.get(expr.var()), &expr) {
                (Some(term), StrExpr::Str(_)) => term.str_value() == value,
                (Some(RdfTerm::Literal { value: v, language: None, datatype: None }), StrExpr::Var(_)) => *v == value,
                _ => false,
            }))
        }
        Constraint::Regex { expr, pattern, flags } => {
            let regex = RegexLite::compile(pattern, flags).map_err(ExecError::Unsupported)?;
            let expr = expr.clone();
            Ok(alloc::boxed::Box::new(move |row| {
                row.get(expr.var()).map(|t| regex.is_match(t.str_value())).unwrap_or(false)
            }))
        }
    }
}

fn naive_labels(rows: &mut [Row], projection: &Projection, language: &str, snapshot: &Snapshot) {
    let Projection::Vars(vars) = projection else { return };
    for row in rows {
        for var in vars {
            let Some(base) = var.strip_suffix("Label") else { continue };
            if base.is_empty() || row.contains_key(var) {
                continue;
            }
            if let Some(RdfTerm::Iri(iri)) = row.get(base) {
                let text = match snapshot.label(iri, language) {
                    Some(label) => label.to_owned(),
                    None => iri.rsplit(|c| c == '/' || c == '#').next().unwrap_or(iri).to_owned(),
                };
                row.insert(var.clone(), RdfTerm::lang_literal(text, language));
            }
        }
    }
}

// --- seeded query generator --------------------------------------------------

/// Deterministic stream of pseudo-random draws for query generation.
pub struct Draws {
    state: u64,
}

impl Draws {
    pub fn new(seed: u64) -> Self {
        Draws { state: splitmix64(seed ^ 0xa076_1d64_78bd_642f) }
    }

    pub fn next(&mut self) -> u64 {
        self.state = splitmix64(self.state);
        self.state
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next() % n.max(1) as u64) as usize
    }

    pub fn chance(&mut self, percent: u64) -> bool {
        self.next() % 100 < percent
    }
}

fn term_text(term: &RdfTerm) -> String {
    match term {
        RdfTerm::Iri(iri) => super::parse::compact_iri(iri).unwrap_or_else(|| format!("<{iri}>")),
        RdfTerm::Literal { value, language, .. } => {
            let escaped = value.replace('\\', "\\\\").replace('\'', "\\'");
            match language {
                Some(lang) => format!("'{escaped}'@{lang}"),
                None => format!("'{escaped}'"),
            }
        }
    }
}

/// Generates one random query text in the supported subset over the
/// snapshot's vocabulary. Indexed generation is deterministic in (seed, i).
pub fn generate_query(snapshot: &Snapshot, seed: u64, index: u64) -> String {
    let mut draws = Draws::new(hash_parts(seed, &["querygen", &index.to_string()]));
    let triples = snapshot.triples();
    assert!(!triples.is_empty(), "query generation needs a non-empty snapshot");

    let var_names = ["a", "b", "c", "lemma", "lexeme", "x", "y"];
    let mut text = String::new();
    let ask = draws.chance(25);
    let mut used_vars: Vec<String> = Vec::new();
    let mut body = String::new();
    let pattern_count = 1 + draws.below(3);

    let push_var = |used: &mut Vec<String>, draws: &mut Draws| -> String {
        // bias toward reuse so joins actually connect
        if !used.is_empty() && draws.chance(55) {
            used[draws.below(used.len())].clone()
        } else {
            let v = var_names[draws.below(var_names.len())].to_owned();
            if !used.contains(&v) {
                used.push(v.clone());
            }
            v
        }
    };

    for _ in 0..pattern_count {
        let (s, p, o) = &triples[draws.below(triples.len())];
        let subject = if draws.chance(70) {
            format!("?{}", push_var(&mut used_vars, &mut draws))
        } else {
            term_text(s)
        };
        let predicate = if draws.chance(80) { term_text(p) } else { format!("?{}", push_var(&mut used_vars, &mut draws)) };
        let object = if draws.chance(60) {
            format!("?{}", push_var(&mut used_vars, &mut draws))
        } else {
            term_text(o)
        };
        body.push_str(&format!("  {subject} {predicate} {object} .\n"));
    }

    if draws.chance(30) && !used_vars.is_empty() {
        let var = used_vars[draws.below(used_vars.len())].clone();
        let mut values = String::new();
        for _ in 0..(1 + draws.below(2)) {
            let (_, _, o) = &triples[draws.below(triples.len())];
            values.push_str(&term_text(o));
            values.push(' ');
        }
        body.insert_str(0, &format!("  VALUES ?{var} {{{}}} .\n", values.trim_end()));
    }

    if draws.chance(35) && !used_vars.is_empty() {
        let var = used_vars[draws.below(used_vars.len())].clone();
        let (_, p, _) = &triples[draws.below(triples.len())];
        let obj = if draws.chance(50) { format!("?{}", push_var(&mut used_vars, &mut draws)) } else { "?opt".to_owned() };
        body.push_str(&format!("  OPTIONAL {{ ?{var} {} {obj} . }}\n", term_text(p)));
    }

    if draws.chance(35) && !used_vars.is_empty() {
        let var = used_vars[draws.below(used_vars.len())].clone();
        let literals: Vec<&RdfTerm> = triples.iter().map(|(_, _, o)| o).filter(|o| !o.is_iri()).collect();
        if !literals.is_empty() && draws.chance(50) {
            let lit = literals[draws.below(literals.len())];
            body.push_str(&format!("  FILTER(STR(?{var}) = '{}')\n", lit.str_value().replace('\\', "\\\\").replace('\'', "\\'")));
        } else if !literals.is_empty() {
            let lit = literals[draws.below(literals.len())];
            let prefix: String = lit.str_value().chars().take(1 + draws.below(2)).collect();
            let escaped = super::regexlite::escape_literal(&prefix).replace('\\', "\\\\").replace('\'', "\\'");
            let flag = if draws.chance(30) { ", 'i'" } else { "" };
            body.push_str(&format!("  FILTER(regex(STR(?{var}), '^{escaped}'{flag}))\n"));
        }
    }

    if ask {
        text.push_str("ASK");
        if draws.chance(60) {
            text.push_str(" WHERE");
        }
        text.push_str(" {\n");
        text.push_str(&body);
        text.push('}');
        return text;
    }

    text.push_str("SELECT ");
    if draws.chance(25) {
        text.push_str("DISTINCT ");
    }
    if used_vars.is_empty() || draws.chance(20) {
        text.push('*');
    } else {
        let mut proj: Vec<&String> = used_vars.iter().collect();
        while proj.len() > 1 && draws.chance(35) {
            let idx = draws.below(proj.len());
            proj.remove(idx);
        }
        let rendered: Vec<String> = proj.iter().map(|v| format!("?{v}")).collect();
        text.push_str(&rendered.join(" "));
    }
    text.push_str(" WHERE {\n");
    text.push_str(&body);
    text.push('}');

    if draws.chance(40) && !used_vars.is_empty() {
        let var = &used_vars[pick_index(seed, index, used_vars.len())];
        if draws.chance(50) {
            let dir = if draws.chance(50) { "DESC" } else { "ASC" };
            text.push_str(&format!(" ORDER BY {dir}(STRLEN(STR(?{var})))"));
        } else {
            text.push_str(&format!(" ORDER BY ?{var}"));
        }
        text.push_str(&format!(" LIMIT {}", 1 + draws.below(20)));
        if draws.chance(30) {
            text.push_str(&format!(" OFFSET {}", draws.below(5)));
        }
    } else if draws.chance(20) {
        text.push_str(&format!(" LIMIT {}", 1 + draws.below(10)));
    }
    text
}
