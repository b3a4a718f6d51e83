//! The binding-join evaluator for the supported subset.

use alloc::borrow::ToOwned;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::rdf::{canonical_row, RdfTerm, ResultSet, Row, Snapshot};

use super::parse::{group_variables, Constraint, Element, Group, OrderExpr, PatternTerm, Projection, Query, QueryForm, StrExpr};
use super::regexlite::RegexLite;
use super::ExecError;

/// Hard cap on intermediate solutions so pathological cross joins from model
/// output degrade into an execution failure instead of a hang.
const SOLUTION_LIMIT: usize = 1_000_000;

pub fn evaluate(query: &Query, snapshot: &Snapshot) -> Result<ResultSet, ExecError> {
    let mut rows = eval_group(&query.group, alloc::vec![Row::new()], snapshot)?;

    if query.form == QueryForm::Ask {
        return Ok(ResultSet::Boolean(!rows.is_empty()));
    }

    if let Some(language) = &query.label_language {
        bind_labels(&mut rows, &query.projection, language, snapshot);
    }

    if !query.order.is_empty() {
        sort_rows(&mut rows, query);
    } else {
        // no ORDER BY: fix a deterministic canonical order anyway so LIMIT
        // and pagination are stable across runs
        rows.sort_by_key(canonical_row);
    }

    let offset = query.offset.unwrap_or(0);
    let mut rows: Vec<Row> = rows.into_iter().skip(offset).collect();
    if let Some(limit) = query.limit {
        rows.truncate(limit);
    }

    let variables = match &query.projection {
        Projection::Star => group_variables(&query.group),
        Projection::Vars(vars) => vars.clone(),
    };
    let mut projected: Vec<Row> = rows
        .into_iter()
        .map(|row| {
            variables
                .iter()
                .filter_map(|v| row.get(v).map(|t| (v.clone(), t.clone())))
                .collect()
        })
        .collect();

    if query.distinct {
        let mut seen = alloc::collections::BTreeSet::new();
        projected.retain(|row| seen.insert(canonical_row(row)));
    }

    Ok(ResultSet::Bindings { variables, rows: projected })
}

fn eval_group(group: &Group, input: Vec<Row>, snapshot: &Snapshot) -> Result<Vec<Row>, ExecError> {
    let mut solutions = input;
    let mut filters: Vec<&Constraint> = Vec::new();

    for element in &group.elements {
        match element {
            Element::Pattern(pattern) => {
                let mut next = Vec::new();
                for solution in &solutions {
                    for (s, p, o) in snapshot.triples() {
                        if let Some(extended) = try_match(solution, pattern, s, p, o) {
                            if next.len() >= SOLUTION_LIMIT {
                                return Err(ExecError::ResourceLimit("solution count".to_string()));
                            }
                            next.push(extended);
                        }
                    }
                }
                solutions = next;
            }
            Element::Values { var, terms } => {
                let mut next = Vec::new();
                for solution in &solutions {
                    match solution.get(var) {
                        Some(bound) => {
                            if terms.iter().any(|t| t == bound) {
                                next.push(solution.clone());
                            }
                        }
                        None => {
                            for term in terms {
                                let mut extended = solution.clone();
                                extended.insert(var.clone(), term.clone());
                                next.push(extended);
                            }
                        }
                    }
                }
                solutions = next;
            }
            Element::Optional(inner) => {
                let mut next = Vec::new();
                for solution in solutions {
                    let extensions = eval_group(inner, alloc::vec![solution.clone()], snapshot)?;
                    if extensions.is_empty() {
                        next.push(solution);
                    } else {
                        next.extend(extensions);
                    }
                    if next.len() > SOLUTION_LIMIT {
                        return Err(ExecError::ResourceLimit("solution count".to_string()));
                    }
                }
                solutions = next;
            }
            Element::Filter(constraint) => filters.push(constraint),
        }
    }

    // filters scope over the whole group, regardless of position
    for constraint in filters {
        let test = compile_constraint(constraint)?;
        solutions.retain(|row| test(row));
    }
    Ok(solutions)
}

fn try_match(solution: &Row, pattern: &super::parse::TriplePattern, s: &RdfTerm, p: &RdfTerm, o: &RdfTerm) -> Option<Row> {
    let slots = [(&pattern.subject, s), (&pattern.predicate, p), (&pattern.object, o)];
    // verify compatibility before paying for a clone; same-variable slots
    // must agree with each other as well as with existing bindings
    for (i, (slot, triple_term)) in slots.iter().enumerate() {
        match slot {
            PatternTerm::Term(want) => {
                if want != *triple_term {
                    return None;
                }
            }
            PatternTerm::Var(name) => {
                if let Some(bound) = solution.get(name.as_str()) {
                    if bound != *triple_term {
                        return None;
                    }
                }
                for (other_slot, other_term) in &slots[..i] {
                    if let PatternTerm::Var(other) = other_slot {
                        if other == name && other_term != triple_term {
                            return None;
                        }
                    }
                }
            }
        }
    }
    let mut extended = solution.clone();
    for (slot, triple_term) in slots {
        if let PatternTerm::Var(name) = slot {
            extended.entry(name.clone()).or_insert_with(|| triple_term.clone());
        }
    }
    Some(extended)
}

type RowTest = alloc::boxed::Box<dyn Fn(&Row) -> bool>;

fn compile_constraint(constraint: &Constraint) -> Result<RowTest, ExecError> {
    match constraint {
        Constraint::Eq { expr, value } => {
            let value = value.clone();
            let expr = expr.clone();
            Ok(alloc::boxed::Box::new(move |row| match (row.get(expr.var()), &expr) {
                (Some(term), StrExpr::Str(_)) => term.str_value() == value,
                // a bare variable compares as a plain literal
                (Some(RdfTerm::Literal { value: v, language: None, datatype: None }), StrExpr::Var(_)) => *v == value,
                _ => false,
            }))
        }
        Constraint::Regex { expr, pattern, flags } => {
            let regex = RegexLite::compile(pattern, flags).map_err(ExecError::Unsupported)?;
            let expr = expr.clone();
            Ok(alloc::boxed::Box::new(move |row| {
                row.get(expr.var()).map(|term| regex.is_match(term.str_value())).unwrap_or(false)
            }))
        }
    }
}

/// Binds `?xLabel` projection variables from the label table in the service
/// language, falling back to the entity's local name.
fn bind_labels(rows: &mut [Row], projection: &Projection, language: &str, snapshot: &Snapshot) {
    let Projection::Vars(vars) = projection else { return };
    let label_vars: Vec<(&String, String)> = vars
        .iter()
        .filter_map(|v| v.strip_suffix("Label").filter(|base| !base.is_empty()).map(|base| (v, base.to_owned())))
        .collect();
    if label_vars.is_empty() {
        return;
    }
    for row in rows {
        for (label_var, base) in &label_vars {
            if row.contains_key(*label_var) {
                continue;
            }
            let Some(RdfTerm::Iri(iri)) = row.get(base.as_str()) else { continue };
            let text = snapshot
                .label(iri, language)
                .map(str::to_owned)
                .or_else(|| RdfTerm::iri(iri.clone()).local_name().map(str::to_owned))
                .unwrap_or_else(|| iri.clone());
            row.insert((*label_var).clone(), RdfTerm::lang_literal(text, language));
        }
    }
}

/// ORDER BY with unbound < IRI < literal, numeric STRLEN keys, and ties
/// broken by the lexicographic order of the full row serialization.
fn sort_rows(rows: &mut [Row], query: &Query) {
    #[derive(PartialEq, Eq, PartialOrd, Ord)]
    enum Key {
        Unbound,
        Len(usize),
        Term(u8, String),
    }
    let key_of = |row: &Row, expr: &OrderExpr| -> Key {
        match expr {
            OrderExpr::Var(v) => match row.get(v) {
                None => Key::Unbound,
                Some(RdfTerm::Iri(iri)) => Key::Term(1, iri.clone()),
                Some(t @ RdfTerm::Literal { .. }) => Key::Term(2, t.canonical()),
            },
            OrderExpr::StrLen(e) => match row.get(e.var()) {
                None => Key::Unbound,
                Some(term) => Key::Len(term.str_value().chars().count()),
            },
        }
    };
    rows.sort_by(|a, b| {
        for key in &query.order {
            let ka = key_of(a, &key.expr);
            let kb = key_of(b, &key.expr);
            let ord = ka.cmp(&kb);
            let ord = if key.descending { ord.reverse() } else { ord };
            if ord != core::cmp::Ordering::Equal {
                return ord;
            }
        }
        canonical_row(a).cmp(&canonical_row(b))
    });
}

#[cfg(test)]
mod tests {
    use super::super::execute_local;
    use crate::rdf::{RdfTerm, ResultSet, Snapshot};
    use alloc::format;
    use alloc::string::{String, ToString};
    use alloc::vec::Vec;

    fn e(local: &str) -> String {
        format!("http://www.wikidata.org/entity/{local}")
    }

    /// The three-triple snapshot from the gender example, feminine planted.
    fn gender_snapshot() -> Snapshot {
        Snapshot::from_triples(alloc::vec![
            (RdfTerm::iri(e("L1")), RdfTerm::iri("http://wikiba.se/ontology#lemma"), RdfTerm::lang_literal("Apfel", "de")),
            (RdfTerm::iri(e("L1")), RdfTerm::iri("http://www.wikidata.org/prop/direct/P5185"), RdfTerm::iri(e("Q1775415"))),
            (RdfTerm::iri(e("Q1775415")), RdfTerm::iri("http://www.w3.org/2000/01/rdf-schema#label"), RdfTerm::lang_literal("feminine", "en")),
        ])
    }

    const GENDER_QUERY: &str = "SELECT ?lexeme ?qitem ?lemma ?qitemLabel\nWHERE\n{\n  VALUES ?lemma {'Apfel'@de} .\n  ?lexeme wikibase:lemma ?lemma ;\n          wdt:P5185 ?qitem.\n  SERVICE wikibase:label {\n    bd:serviceParam wikibase:language 'en'\n  }\n}";

    #[test]
    fn empty_ask_is_true_on_any_snapshot() {
        assert_eq!(execute_local("ASK WHERE { }", &Snapshot::default()).unwrap(), ResultSet::Boolean(true));
        assert_eq!(execute_local("ASK WHERE { }", &gender_snapshot()).unwrap(), ResultSet::Boolean(true));
    }

    #[test]
    fn gender_query_joins_and_labels() {
        let result = execute_local(GENDER_QUERY, &gender_snapshot()).unwrap();
        let ResultSet::Bindings { variables, rows } = result else { panic!("expected bindings") };
        assert_eq!(variables, ["lexeme", "qitem", "lemma", "qitemLabel"]);
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row["lexeme"], RdfTerm::iri(e("L1")));
        assert_eq!(row["qitem"], RdfTerm::iri(e("Q1775415")));
        assert_eq!(row["lemma"], RdfTerm::lang_literal("Apfel", "de"));
        assert_eq!(row["qitemLabel"], RdfTerm::lang_literal("feminine", "en"));
    }

    #[test]
    fn label_falls_back_to_local_name() {
        let snapshot = Snapshot::from_triples(alloc::vec![(
            RdfTerm::iri(e("L1")),
            RdfTerm::iri("http://www.wikidata.org/prop/direct/P5185"),
            RdfTerm::iri(e("Q999")),
        )]);
        let result = execute_local(
            "SELECT ?qitem ?qitemLabel WHERE { ?lexeme wdt:P5185 ?qitem . SERVICE wikibase:label { bd:serviceParam wikibase:language 'en' } }",
            &snapshot,
        )
        .unwrap();
        let ResultSet::Bindings { rows, .. } = result else { panic!() };
        assert_eq!(rows[0]["qitemLabel"], RdfTerm::lang_literal("Q999", "en"));
    }

    fn lemma_snapshot(lemmas: &[&str]) -> Snapshot {
        let triples = lemmas
            .iter()
            .enumerate()
            .map(|(i, lemma)| {
                (
                    RdfTerm::iri(e(&format!("L{i}"))),
                    RdfTerm::iri("http://wikiba.se/ontology#lemma"),
                    RdfTerm::lang_literal(*lemma, "de"),
                )
            })
            .collect();
        Snapshot::from_triples(triples)
    }

    #[test]
    fn order_by_strlen_desc_with_limit() {
        let lemmas: Vec<String> = (0..200).map(|i| "x".repeat(i % 37 + 1) + &i.to_string()).collect();
        let refs: Vec<&str> = lemmas.iter().map(String::as_str).collect();
        let snapshot = lemma_snapshot(&refs);
        let result = execute_local(
            "SELECT ?lexeme ?lemma WHERE { ?lexeme wikibase:lemma ?lemma . } ORDER BY DESC(STRLEN(STR(?lemma))) LIMIT 50",
            &snapshot,
        )
        .unwrap();
        let ResultSet::Bindings { rows, .. } = result else { panic!() };
        assert_eq!(rows.len(), 50);
        let lengths: Vec<usize> = rows.iter().map(|r| r["lemma"].str_value().chars().count()).collect();
        let mut sorted = lengths.clone();
        sorted.sort_by(|a, b| b.cmp(a));
        assert_eq!(lengths, sorted, "lengths must be non-increasing");
    }

    #[test]
    fn order_limit_ties_break_deterministically() {
        let snapshot = lemma_snapshot(&["bb", "aa", "dd", "cc"]);
        let q = "SELECT ?lemma WHERE { ?lexeme wikibase:lemma ?lemma . } ORDER BY STRLEN(STR(?lemma)) LIMIT 2";
        let first = execute_local(q, &snapshot).unwrap();
        let second = execute_local(q, &snapshot).unwrap();
        assert_eq!(first, second);
        let ResultSet::Bindings { rows, .. } = first else { panic!() };
        // all keys tie; canonical row order decides
        assert_eq!(rows[0]["lemma"].str_value(), "aa");
        assert_eq!(rows[1]["lemma"].str_value(), "bb");
    }

    #[test]
    fn filter_str_equality_and_regex() {
        let snapshot = lemma_snapshot(&["Apfel", "Birne", "Ananas"]);
        let eq = execute_local(
            "SELECT ?lexeme ?lemma WHERE { ?lexeme wikibase:lemma ?lemma . FILTER(STR(?lemma) = 'Apfel') }",
            &snapshot,
        )
        .unwrap();
        assert_eq!(eq.row_count(), 1);
        let re = execute_local(
            "SELECT ?lemma WHERE { ?lexeme wikibase:lemma ?lemma . FILTER(regex(STR(?lemma), '^A')) }",
            &snapshot,
        )
        .unwrap();
        assert_eq!(re.row_count(), 2);
        let ci = execute_local(
            "SELECT ?lemma WHERE { ?lexeme wikibase:lemma ?lemma . FILTER(regex(STR(?lemma), '^a', 'i')) }",
            &snapshot,
        )
        .unwrap();
        assert_eq!(ci.row_count(), 2);
    }

    #[test]
    fn optional_keeps_unmatched_solutions() {
        let mut triples = alloc::vec![
            (RdfTerm::iri(e("L1")), RdfTerm::iri("http://wikiba.se/ontology#lemma"), RdfTerm::lang_literal("Apfel", "de")),
            (RdfTerm::iri(e("L2")), RdfTerm::iri("http://wikiba.se/ontology#lemma"), RdfTerm::lang_literal("Baum", "de")),
        ];
        triples.push((
            RdfTerm::iri(e("L1")),
            RdfTerm::iri("http://www.wikidata.org/prop/direct/P5185"),
            RdfTerm::iri(e("Q499327")),
        ));
        let snapshot = Snapshot::from_triples(triples);
        let result = execute_local(
            "SELECT ?lexeme ?lemma ?qitem WHERE { ?lexeme wikibase:lemma ?lemma . OPTIONAL { ?lexeme wdt:P5185 ?qitem . } }",
            &snapshot,
        )
        .unwrap();
        let ResultSet::Bindings { rows, .. } = result else { panic!() };
        assert_eq!(rows.len(), 2);
        assert_eq!(rows.iter().filter(|r| r.contains_key("qitem")).count(), 1);
    }

    #[test]
    fn values_join_respects_existing_bindings() {
        let snapshot = lemma_snapshot(&["Apfel", "Baum"]);
        let result = execute_local(
            "SELECT ?lemma WHERE { ?lexeme wikibase:lemma ?lemma . VALUES ?lemma {'Apfel'@de 'Kirsche'@de} }",
            &snapshot,
        )
        .unwrap();
        assert_eq!(result.row_count(), 1);
    }

    #[test]
    fn distinct_deduplicates() {
        let snapshot = Snapshot::from_triples(alloc::vec![
            (RdfTerm::iri(e("L1")), RdfTerm::iri("http://wikiba.se/ontology#lemma"), RdfTerm::lang_literal("See", "de")),
            (RdfTerm::iri(e("L2")), RdfTerm::iri("http://wikiba.se/ontology#lemma"), RdfTerm::lang_literal("See", "de")),
        ]);
        let plain = execute_local("SELECT ?lemma WHERE { ?lexeme wikibase:lemma ?lemma . }", &snapshot).unwrap();
        assert_eq!(plain.row_count(), 2);
        let distinct = execute_local("SELECT DISTINCT ?lemma WHERE { ?lexeme wikibase:lemma ?lemma . }", &snapshot).unwrap();
        assert_eq!(distinct.row_count(), 1);
    }

    #[test]
    fn offset_pagination_is_stable_and_disjoint() {
        let lemmas: Vec<String> = (0..25).map(|i| format!("w{i:02}")).collect();
        let refs: Vec<&str> = lemmas.iter().map(String::as_str).collect();
        let snapshot = lemma_snapshot(&refs);
        let mut collected = Vec::new();
        for page in 0..3 {
            let q = format!(
                "SELECT ?lemma WHERE {{ ?lexeme wikibase:lemma ?lemma . }} ORDER BY ?lexeme LIMIT 10 OFFSET {}",
                page * 10
            );
            let ResultSet::Bindings { rows, .. } = execute_local(&q, &snapshot).unwrap() else { panic!() };
            collected.extend(rows.into_iter().map(|r| r["lemma"].str_value().to_string()));
        }
        assert_eq!(collected.len(), 25);
        let unique: alloc::collections::BTreeSet<_> = collected.iter().collect();
        assert_eq!(unique.len(), 25);
    }

    #[test]
    fn cross_join_explosion_is_a_resource_error() {
        let lemmas: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let refs: Vec<&str> = lemmas.iter().map(String::as_str).collect();
        let snapshot = lemma_snapshot(&refs);
        let err = execute_local(
            "SELECT * WHERE { ?a ?b ?c . ?d ?e ?f . ?g ?h ?i . ?j ?k ?l }",
            &snapshot,
        )
        .unwrap_err();
        assert!(matches!(err, super::ExecError::ResourceLimit(_)));
    }
}
