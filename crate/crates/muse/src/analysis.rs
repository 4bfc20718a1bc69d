//! Query classification: recursion structure, translatability to Horn
//! clauses, specification polarity, specification splitting, and backend
//! selection.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::formula::{and_of, Formula, Quantifier, Sort, TermExpr};
use crate::semantics::{Problem, SemanticRule, Semantics, Solution};
use crate::term::Term;

/// Polarity of a relation's occurrences within a formula. Occurrences under
/// an `iff` count as both polarities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
    Both,
    Absent,
}

impl Polarity {
    fn join(self, other: Polarity) -> Polarity {
        use Polarity::*;
        match (self, other) {
            (Absent, p) | (p, Absent) => p,
            (Positive, Positive) => Positive,
            (Negative, Negative) => Negative,
            _ => Both,
        }
    }

    fn flip(self) -> Polarity {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
            p => p,
        }
    }
}

/// Polarity of every relation occurring in the formula. A complement
/// occurrence counts with inverted polarity for its base relation.
pub fn spec_polarity(spec: &Formula) -> BTreeMap<String, Polarity> {
    let mut out = BTreeMap::new();
    collect_polarity(spec, Polarity::Positive, &mut out);
    out
}

fn collect_polarity(f: &Formula, pol: Polarity, out: &mut BTreeMap<String, Polarity>) {
    match f {
        Formula::IntConst(_) | Formula::BoolConst(_) | Formula::Var(..) => {}
        Formula::Add(a, b) | Formula::Sub(a, b) | Formula::Cmp(_, a, b) => {
            collect_polarity(a, pol, out);
            collect_polarity(b, pol, out);
        }
        Formula::Mul(_, a) => collect_polarity(a, pol, out),
        Formula::Not(a) => collect_polarity(a, pol.flip(), out),
        Formula::And(fs) | Formula::Or(fs) => {
            fs.iter().for_each(|x| collect_polarity(x, pol, out))
        }
        Formula::Implies(a, b) => {
            collect_polarity(a, pol.flip(), out);
            collect_polarity(b, pol, out);
        }
        Formula::Iff(a, b) => {
            collect_polarity(a, Polarity::Both, out);
            collect_polarity(b, Polarity::Both, out);
        }
        Formula::Quant(_, _, body) => collect_polarity(body, pol, out),
        Formula::RelApp { rel, args, .. } => {
            // Complement relations count as relations of their own; user
            // specifications contain none before normalization.
            out.entry(rel.to_string())
                .and_modify(|p| *p = p.join(pol))
                .or_insert(pol);
            args.iter().for_each(|a| collect_polarity(a, pol, out));
        }
    }
}

/// Rejects a semantics in which some relation occurs negatively in its own
/// definition, directly or through the definitions of the relations it
/// mentions (odd-parity dependency cycle).
pub fn polarity_closure(sem: &Semantics) -> Result<(), Vec<String>> {
    // Edges relation -> (relation, polarity) over all rules.
    let mut edges: BTreeMap<String, Vec<(String, Polarity)>> = BTreeMap::new();
    for rule in sem.rules.values() {
        let mut pols = BTreeMap::new();
        collect_polarity(&rule.body, Polarity::Positive, &mut pols);
        let entry = edges.entry(rule.relation.clone()).or_default();
        for (name, pol) in pols {
            entry.push((name, pol));
        }
    }
    let mut errors = Vec::new();
    for rel in &sem.relations {
        // BFS over (relation, parity) states starting from the relation's
        // own body occurrences.
        let mut seen: BTreeSet<(String, bool)> = BTreeSet::new();
        let mut queue: VecDeque<(String, bool)> = VecDeque::new();
        let push =
            |q: &mut VecDeque<(String, bool)>, s: &mut BTreeSet<(String, bool)>,
             name: &str, neg: bool| {
                if s.insert((name.to_string(), neg)) {
                    q.push_back((name.to_string(), neg));
                }
            };
        for (name, pol) in edges.get(&rel.name).map(Vec::as_slice).unwrap_or(&[]) {
            match pol {
                Polarity::Positive => push(&mut queue, &mut seen, name, false),
                Polarity::Negative => push(&mut queue, &mut seen, name, true),
                Polarity::Both => {
                    push(&mut queue, &mut seen, name, false);
                    push(&mut queue, &mut seen, name, true);
                }
                Polarity::Absent => {}
            }
        }
        while let Some((name, neg)) = queue.pop_front() {
            if name == rel.name && neg {
                errors.push(format!(
                    "relation {} occurs negatively in its own definition (through {})",
                    rel.name, name
                ));
                break;
            }
            for (next, pol) in edges.get(&name).map(Vec::as_slice).unwrap_or(&[]) {
                match pol {
                    Polarity::Positive => push(&mut queue, &mut seen, next, neg),
                    Polarity::Negative => push(&mut queue, &mut seen, next, !neg),
                    Polarity::Both => {
                        push(&mut queue, &mut seen, next, false);
                        push(&mut queue, &mut seen, next, true);
                    }
                    Polarity::Absent => {}
                }
            }
        }
        if seen.contains(&(rel.name.clone(), true)) && errors.is_empty() {
            errors.push(format!(
                "relation {} occurs negatively in its own definition",
                rel.name
            ));
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        errors.sort();
        errors.dedup();
        Err(errors)
    }
}

/// Relation applications of a rule body with term variables resolved against
/// a concrete term: the rule's own term parameter maps to the term itself,
/// child parameters map to the corresponding subterms.
pub fn resolved_body_apps(
    sem: &Semantics,
    rule: &SemanticRule,
    term: &Term,
) -> Vec<(String, Term)> {
    let rel = sem.relation(&rule.relation).expect("rule of known relation");
    let mut out = Vec::new();
    rule.body.for_each_rel_app(&mut |name, te, _| {
        if let Some(TermExpr::Var(v, _)) = te {
            let resolved = if *v == rel.term_param {
                Some(term.clone())
            } else {
                rule.child_term_params
                    .iter()
                    .position(|c| c == v)
                    .map(|k| term.children[k].clone())
            };
            if let Some(t) = resolved {
                out.push((name.base.clone(), t));
            }
        } else if let Some(TermExpr::Const(t)) = te {
            out.push((name.base.clone(), t.clone()));
        }
    });
    out
}

/// Whether `ancestor` is reachable from `rel` through applications on the
/// same term (the applies-at-same-term graph of the term's root production).
pub fn is_t_ancestor(sem: &Semantics, ancestor: &str, rel: &str, term: &Term) -> bool {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    queue.push_back(rel.to_string());
    while let Some(current) = queue.pop_front() {
        let Ok(rule) = sem.rule_of(&current, &term.symbol.name) else {
            continue;
        };
        let relation = sem.relation(&current).expect("known relation");
        let mut selfs = Vec::new();
        rule.body.for_each_rel_app(&mut |name, te, _| {
            if let Some(TermExpr::Var(v, _)) = te {
                if *v == relation.term_param {
                    selfs.push(name.base.clone());
                }
            }
        });
        for s in selfs {
            if s == ancestor {
                return true;
            }
            if seen.insert(s.clone()) {
                queue.push_back(s);
            }
        }
    }
    false
}

/// Whether the derivation tree of `rel` on `term` necessarily has finite
/// height: the relation is not an ancestor of itself on the term, and every
/// application in its rule is in turn non-recursive on its term.
pub fn non_recursive_on(sem: &Semantics, rel: &str, term: &Term) -> bool {
    fn go(
        sem: &Semantics,
        rel: &str,
        term: &Term,
        in_progress: &mut BTreeSet<(String, Term)>,
        memo: &mut BTreeMap<(String, Term), bool>,
    ) -> bool {
        let key = (rel.to_string(), term.clone());
        if let Some(&r) = memo.get(&key) {
            return r;
        }
        if !in_progress.insert(key.clone()) {
            // Came back to the same (relation, term): recursive.
            return false;
        }
        let result = match sem.rule_of(rel, &term.symbol.name) {
            Ok(rule) => resolved_body_apps(sem, rule, term)
                .iter()
                .all(|(r, t)| go(sem, r, t, in_progress, memo)),
            Err(_) => true,
        };
        in_progress.remove(&key);
        memo.insert(key, result);
        result
    }
    go(sem, rel, term, &mut BTreeSet::new(), &mut BTreeMap::new())
}

/// Whether the rules reachable from `rel` on `term` are translatable to Horn
/// clauses: no negative relation occurrence, no universal quantifier, and
/// recursively so for every application. Memoized on (relation, production)
/// since the check only depends on the productions reachable in the term.
pub fn chc_like_for(sem: &Semantics, rel: &str, term: &Term) -> bool {
    fn body_ok(body: &Formula) -> bool {
        let nnf = body.nnf();
        fn scan(f: &Formula) -> bool {
            match f {
                Formula::Quant(Quantifier::Forall, _, _) => false,
                Formula::Not(inner) => !matches!(**inner, Formula::RelApp { .. }),
                Formula::RelApp { rel, args, .. } => {
                    !rel.complement && args.iter().all(scan)
                }
                Formula::Quant(_, _, b) => scan(b),
                Formula::And(fs) | Formula::Or(fs) => fs.iter().all(scan),
                Formula::Implies(a, b) | Formula::Iff(a, b) => scan(a) && scan(b),
                Formula::Add(a, b) | Formula::Sub(a, b) | Formula::Cmp(_, a, b) => {
                    scan(a) && scan(b)
                }
                Formula::Mul(_, a) => scan(a),
                _ => true,
            }
        }
        scan(&nnf)
    }

    fn go(
        sem: &Semantics,
        rel: &str,
        term: &Term,
        visiting: &mut BTreeSet<(String, String)>,
        memo: &mut BTreeMap<(String, String), bool>,
    ) -> bool {
        let key = (rel.to_string(), term.symbol.name.clone());
        if let Some(&r) = memo.get(&key) {
            return r;
        }
        if visiting.contains(&key) {
            // A cycle through productions already under scrutiny does not by
            // itself violate the conditions.
            return true;
        }
        visiting.insert(key.clone());
        let result = match sem.rule_of(rel, &term.symbol.name) {
            Ok(rule) => {
                body_ok(&rule.body)
                    && resolved_body_apps(sem, rule, term)
                        .iter()
                        .all(|(r, t)| go(sem, r, t, visiting, memo))
            }
            Err(_) => false,
        };
        visiting.remove(&key);
        memo.insert(key, result);
        result
    }
    go(sem, rel, term, &mut BTreeSet::new(), &mut BTreeMap::new())
}

/// Result of attempting to split a specification into a positive-only and a
/// negative-only part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitResult {
    Split { positive: Formula, negative: Formula },
    NotSplittable,
}

/// Best-effort syntactic split of a specification into conjuncts whose
/// relation occurrences are single-polarity. Shared universal prefixes are
/// kept, `iff` is expanded when it contains relations, implications
/// distribute over conjunctive consequents, and nested implications are
/// uncurried into a single antecedent. Relation-free conjuncts join the
/// negative part.
pub fn split_specification(spec: &Formula) -> SplitResult {
    let mut prefix: Vec<(String, Sort)> = Vec::new();
    let mut core = spec.clone();
    while let Formula::Quant(Quantifier::Forall, vars, body) = core {
        prefix.extend(vars);
        core = *body;
    }

    let conjuncts = conjuncts_of(&core);
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for c in conjuncts {
        let pols = spec_polarity(&c);
        let has_pos = pols.values().any(|p| matches!(p, Polarity::Positive));
        let has_neg = pols.values().any(|p| matches!(p, Polarity::Negative));
        let has_both = pols.values().any(|p| matches!(p, Polarity::Both));
        if has_both || (has_pos && has_neg) {
            return SplitResult::NotSplittable;
        }
        if has_pos {
            positive.push(c);
        } else {
            negative.push(c);
        }
    }
    let wrap = |parts: Vec<Formula>| -> Formula {
        if parts.is_empty() {
            Formula::BoolConst(true)
        } else {
            Formula::forall(prefix.clone(), and_of(parts))
        }
    };
    SplitResult::Split {
        positive: wrap(positive),
        negative: wrap(negative),
    }
}

fn flatten_and(f: &Formula, out: &mut Vec<Formula>) {
    match f {
        Formula::And(fs) => fs.iter().for_each(|x| flatten_and(x, out)),
        other => out.push(other.clone()),
    }
}

fn conjuncts_of(f: &Formula) -> Vec<Formula> {
    match f {
        Formula::And(fs) => fs.iter().flat_map(conjuncts_of).collect(),
        Formula::Iff(a, b) if a.contains_rel_apps() || b.contains_rel_apps() => {
            let mut out = conjuncts_of(&Formula::implies((**a).clone(), (**b).clone()));
            out.extend(conjuncts_of(&Formula::implies((**b).clone(), (**a).clone())));
            out
        }
        Formula::Implies(a, b) => {
            let bs = conjuncts_of(b);
            if bs.len() > 1 {
                bs.into_iter()
                    .flat_map(|c| conjuncts_of(&Formula::implies((**a).clone(), c)))
                    .collect()
            } else {
                let consequent = bs.into_iter().next().expect("nonempty");
                let mut ants = Vec::new();
                flatten_and(a, &mut ants);
                match consequent {
                    Formula::Implies(c, d) => {
                        flatten_and(&c, &mut ants);
                        conjuncts_of(&Formula::implies(and_of(ants), (*d).clone()))
                    }
                    other => vec![Formula::implies(and_of(ants), other)],
                }
            }
        }
        Formula::Quant(Quantifier::Forall, vars, body) => {
            let cs = conjuncts_of(body);
            if cs.len() > 1 {
                cs.into_iter()
                    .map(|c| Formula::forall(vars.clone(), c))
                    .collect()
            } else {
                vec![f.clone()]
            }
        }
        other => vec![other.clone()],
    }
}

/// Encoding backends in order of preference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Smt,
    Chc,
    CoChc,
    Split,
    Muclp,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Backend::Smt => "smt",
            Backend::Chc => "chc",
            Backend::CoChc => "cochc",
            Backend::Split => "split",
            Backend::Muclp => "muclp",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub non_recursive: bool,
    pub chc_like: bool,
    pub spec_polarity: BTreeMap<String, Polarity>,
    pub recommended: Backend,
}

/// Relation applications of the specification, resolved against the bound
/// solution terms.
pub fn spec_occurrences(problem: &Problem, solution: &Solution) -> Vec<(String, Term)> {
    let mut out = Vec::new();
    problem.spec.for_each_rel_app(&mut |rel, te, _| {
        if let Some(TermExpr::Var(f, _)) = te {
            if let Some(t) = solution.term_for(f) {
                out.push((rel.base.clone(), t.clone()));
            }
        }
    });
    out
}

/// Picks the simplest applicable backend: quantified SMT for non-recursive
/// occurrences, Horn clauses for negative-only CHC-like queries, co-Horn for
/// positive-only ones, a split query when the specification separates, and
/// the fixed-point encoding otherwise.
pub fn classify(problem: &Problem, solution: &Solution) -> Classification {
    let sem = &problem.semantics;
    let occs = spec_occurrences(problem, solution);
    let non_recursive = occs.iter().all(|(r, t)| non_recursive_on(sem, r, t));
    let chc_like = occs.iter().all(|(r, t)| chc_like_for(sem, r, t));
    let pol = spec_polarity(&problem.spec);
    let all_negative = occs
        .iter()
        .all(|(r, _)| matches!(pol.get(r), Some(Polarity::Negative) | None));
    let all_positive = occs
        .iter()
        .all(|(r, _)| matches!(pol.get(r), Some(Polarity::Positive) | None));

    let recommended = if non_recursive {
        Backend::Smt
    } else if chc_like && all_negative {
        Backend::Chc
    } else if chc_like && all_positive {
        Backend::CoChc
    } else if split_ok(problem, solution) {
        Backend::Split
    } else {
        Backend::Muclp
    };

    Classification {
        non_recursive,
        chc_like,
        spec_polarity: pol,
        recommended,
    }
}

/// Whether the split halves each satisfy their backend's hypothesis: the
/// negative part must be CHC-like on its occurrences, and so must the
/// positive part (solved through the dual encoding).
fn split_ok(problem: &Problem, solution: &Solution) -> bool {
    let SplitResult::Split { positive, negative } = split_specification(&problem.spec) else {
        return false;
    };
    let sem = &problem.semantics;
    let half_ok = |half: &Formula| -> bool {
        let mut ok = true;
        half.for_each_rel_app(&mut |rel, te, _| {
            if let Some(TermExpr::Var(f, _)) = te {
                if let Some(t) = solution.term_for(f) {
                    if !chc_like_for(sem, &rel.base, t) {
                        ok = false;
                    }
                }
            }
        });
        ok
    };
    half_ok(&positive) && half_ok(&negative)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{Formula, RelName, Sort, TermExpr};

    fn rel_app(name: &str, fun: &str) -> Formula {
        Formula::rel(
            RelName::plain(name),
            TermExpr::Var(fun.into(), "S".into()),
            vec![Formula::var("x", Sort::Int)],
        )
    }

    #[test]
    fn polarity_of_negated_and_implied_occurrences() {
        let f = Formula::forall(
            vec![("x".into(), Sort::Int)],
            Formula::implies(rel_app("R", "f"), Formula::var("b", Sort::Bool)),
        );
        assert_eq!(spec_polarity(&f)["R"], Polarity::Negative);

        let g = Formula::not(Formula::not(rel_app("R", "f")));
        assert_eq!(spec_polarity(&g)["R"], Polarity::Positive);

        let h = Formula::iff(rel_app("R", "f"), Formula::BoolConst(true));
        assert_eq!(spec_polarity(&h)["R"], Polarity::Both);
    }

    #[test]
    fn split_of_single_polarity_spec_has_trivial_positive_part() {
        let f = Formula::forall(
            vec![("x".into(), Sort::Int)],
            Formula::eq(Formula::var("x", Sort::Int), Formula::var("x", Sort::Int)),
        );
        match split_specification(&f) {
            SplitResult::Split { positive, negative } => {
                assert_eq!(positive, Formula::BoolConst(true));
                assert_eq!(negative, f);
            }
            SplitResult::NotSplittable => panic!("expected a split"),
        }
    }

    #[test]
    fn implication_between_occurrences_is_not_splittable() {
        let f = Formula::implies(rel_app("R", "f"), rel_app("R", "f"));
        assert_eq!(split_specification(&f), SplitResult::NotSplittable);
    }

    #[test]
    fn iff_with_relations_splits_into_two_implications() {
        let rhs = Formula::cmp(
            crate::formula::CmpOp::Le,
            Formula::var("x", Sort::Int),
            Formula::int(0),
        );
        let f = Formula::forall(
            vec![("x".into(), Sort::Int)],
            Formula::iff(rel_app("R", "f"), rhs),
        );
        match split_specification(&f) {
            SplitResult::Split { positive, negative } => {
                assert_eq!(spec_polarity(&positive)["R"], Polarity::Positive);
                assert_eq!(spec_polarity(&negative)["R"], Polarity::Negative);
            }
            SplitResult::NotSplittable => panic!("expected a split"),
        }
    }
}
