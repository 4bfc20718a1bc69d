//! Backend encodings and textual emitters.
//!
//! Four encoders turn a (problem, solution) pair into a backend query:
//!
//! * [`smt_formula_of`] — fully expands relation applications into a closed
//!   first-order formula (non-recursive occurrences only);
//! * [`chc_of`] — a Horn-clause system plus the substituted specification
//!   (negative occurrences, Horn-fragment rules);
//! * [`co_chc_of`] — the dualized clause set and query (positive
//!   occurrences); solved through the fixed-point path;
//! * [`muclp_of`] — the total encoding into an ordered system of least and
//!   greatest fixed-point equations.
//!
//! Emitters render SMT-LIB2 scripts (`LIA` and `HORN` logics) and the
//! canonical `muclp-v1` text format. Emission is deterministic: identical
//! queries yield byte-identical scripts.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::analysis::{self, Polarity};
use crate::formula::{Formula, FreshCounter, RelName, Sort, TermExpr};
use crate::semantics::{Fix, FixpointEquation, Problem, Solution, SolutionError};
use crate::term::Term;
use crate::transform::{
    self, body_for_term, clauses_to_body, dnf_cubes, norm, phi_of, reify_body, Clause, ReifyNamer,
    TransformError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Smt,
    Chc,
    CoChc,
    Muclp,
}

impl std::fmt::Display for QueryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            QueryKind::Smt => "smt",
            QueryKind::Chc => "chc",
            QueryKind::CoChc => "cochc",
            QueryKind::Muclp => "muclp",
        };
        write!(f, "{s}")
    }
}

/// Direction of an emitted fixed-point equation, with provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Equation {
    pub base: String,
    pub complement: bool,
    pub term: Term,
    pub fix: Fix,
    pub params: Vec<(String, Sort)>,
    pub body: Formula,
    /// Rendered head name once the term argument has been erased.
    pub name: Option<String>,
}

impl Equation {
    pub fn head_name(&self) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None => {
                let mut n = self.base.clone();
                if self.complement {
                    n.push('~');
                }
                n
            }
        }
    }

    pub fn to_fixpoint(&self) -> FixpointEquation {
        FixpointEquation {
            name: self.head_name(),
            fix: self.fix,
            params: self.params.clone(),
            body: self.body.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("{0}")]
    Hypothesis(String),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Solution(#[from] SolutionError),
    #[error("MUCLP emission requires reification")]
    NotReified,
    #[error("specification is not expressible as a Horn query: {0}")]
    NotHornQuery(String),
    #[error("internal: {0}")]
    Internal(String),
}

/// An encoded backend query: clauses or equations plus a goal formula, and
/// the rendered script once an emitter ran.
#[derive(Debug, Clone)]
pub struct EncodedQuery {
    pub kind: QueryKind,
    pub clauses: Vec<Clause>,
    pub equations: Vec<Equation>,
    pub goal: Formula,
    /// The query is valid iff the emitted goal is *unsatisfied* (used by the
    /// dual encoding, which is solved by falsification).
    pub negate_goal: bool,
    pub reified: bool,
    /// Grammar snapshot for emitting algebraic data types when clauses still
    /// carry term arguments.
    pub grammar: crate::term::Grammar,
    pub text: Option<String>,
}

impl EncodedQuery {
    fn new(kind: QueryKind, problem: &Problem, goal: Formula) -> EncodedQuery {
        EncodedQuery {
            kind,
            clauses: Vec::new(),
            equations: Vec::new(),
            goal,
            negate_goal: false,
            reified: false,
            grammar: problem.grammar.clone(),
            text: None,
        }
    }
}

/// Fully expands every relation application of the substituted specification
/// into the defining rule bodies, yielding a closed quantified formula. The
/// result contains no relations; it is valid iff the solution is valid.
/// Fails when some occurrence is recursive on its term.
pub fn smt_formula_of(
    problem: &Problem,
    solution: &Solution,
    fresh: &mut FreshCounter,
) -> Result<EncodedQuery, EncodeError> {
    let spec = problem.substituted_spec(solution)?;
    let sem = &problem.semantics;

    fn expand(
        sem: &crate::semantics::Semantics,
        f: &Formula,
        stack: &mut Vec<(String, Term)>,
        fresh: &mut FreshCounter,
    ) -> Result<Formula, EncodeError> {
        match f {
            Formula::RelApp { rel, term, args } => {
                let Some(TermExpr::Const(t)) = term else {
                    return Err(EncodeError::Transform(TransformError::SymbolicTerm(
                        format!("{f:?}"),
                    )));
                };
                let args = args
                    .iter()
                    .map(|a| expand(sem, a, stack, fresh))
                    .collect::<Result<Vec<_>, _>>()?;
                let key = (rel.base.clone(), t.clone());
                if stack.contains(&key) {
                    return Err(EncodeError::Hypothesis(format!(
                        "relation {} is recursive on {}; use the fixed-point encoding",
                        rel.base, t
                    )));
                }
                stack.push(key);
                let app = Formula::RelApp {
                    rel: RelName::plain(rel.base.clone()),
                    term: Some(TermExpr::Const(t.clone())),
                    args,
                };
                let body = phi_of(sem, &app, fresh)?;
                let expanded = expand(sem, &body, stack, fresh)?;
                stack.pop();
                Ok(if rel.complement {
                    Formula::not(expanded)
                } else {
                    expanded
                })
            }
            Formula::Not(a) => Ok(Formula::not(expand(sem, a, stack, fresh)?)),
            Formula::And(fs) => Ok(Formula::And(
                fs.iter()
                    .map(|x| expand(sem, x, stack, fresh))
                    .collect::<Result<_, _>>()?,
            )),
            Formula::Or(fs) => Ok(Formula::Or(
                fs.iter()
                    .map(|x| expand(sem, x, stack, fresh))
                    .collect::<Result<_, _>>()?,
            )),
            Formula::Implies(a, b) => Ok(Formula::implies(
                expand(sem, a, stack, fresh)?,
                expand(sem, b, stack, fresh)?,
            )),
            Formula::Iff(a, b) => Ok(Formula::iff(
                expand(sem, a, stack, fresh)?,
                expand(sem, b, stack, fresh)?,
            )),
            Formula::Quant(q, vars, body) => Ok(Formula::Quant(
                *q,
                vars.clone(),
                Box::new(expand(sem, body, stack, fresh)?),
            )),
            other => Ok(other.clone()),
        }
    }

    let goal = expand(sem, &spec, &mut Vec::new(), fresh)?;
    debug_assert!(!goal.contains_rel_apps());
    let mut q = EncodedQuery::new(QueryKind::Smt, problem, goal);
    q.reified = true; // no relations remain at all
    Ok(q)
}

fn check_chc_hypothesis(
    problem: &Problem,
    solution: &Solution,
    want: Polarity,
) -> Result<(), EncodeError> {
    let pol = analysis::spec_polarity(&problem.spec);
    for (rel, term) in analysis::spec_occurrences(problem, solution) {
        match (pol.get(&rel), want) {
            (Some(Polarity::Negative), Polarity::Negative)
            | (Some(Polarity::Positive), Polarity::Positive)
            | (None, _) => {}
            (p, _) => {
                return Err(EncodeError::Hypothesis(format!(
                    "specification has a {} occurrence of {rel}; expected only {} occurrences",
                    match p {
                        Some(Polarity::Positive) => "positive",
                        Some(Polarity::Negative) => "negative",
                        Some(Polarity::Both) => "mixed-polarity",
                        _ => "missing",
                    },
                    match want {
                        Polarity::Negative => "negative",
                        _ => "positive",
                    }
                )))
            }
        }
        if !analysis::chc_like_for(&problem.semantics, &rel, &term) {
            return Err(EncodeError::Hypothesis(format!(
                "the rules of {rel} are not CHC-like for the bound term"
            )));
        }
    }
    Ok(())
}

/// Worklist over (relation, subterm) pairs reachable from the goal,
/// accumulating the Horn clauses of each pair.
fn chc_worklist(
    problem: &Problem,
    goal: &Formula,
    fresh: &mut FreshCounter,
) -> Result<Vec<Clause>, EncodeError> {
    let sem = &problem.semantics;
    let mut queue: VecDeque<(String, Term)> = VecDeque::new();
    let mut seen: BTreeSet<(String, Term)> = BTreeSet::new();
    goal.for_each_rel_app(&mut |rel, te, _| {
        if let Some(TermExpr::Const(t)) = te {
            let key = (rel.base.clone(), t.clone());
            if seen.insert(key.clone()) {
                queue.push_back(key);
            }
        }
    });
    let mut clauses = Vec::new();
    while let Some((rel, term)) = queue.pop_front() {
        let rules = transform::rules_of(sem, &rel, &term, fresh)?;
        for clause in &rules {
            clause.body.for_each_rel_app(&mut |r, te, _| {
                if let Some(TermExpr::Const(t)) = te {
                    let key = (r.base.clone(), t.clone());
                    if seen.insert(key.clone()) {
                        queue.push_back(key);
                    }
                }
            });
        }
        clauses.extend(rules);
    }
    Ok(clauses)
}

/// Encodes the query as Horn-clause satisfiability: the clause system of all
/// reachable (relation, subterm) pairs plus the substituted specification.
/// Requires every specification occurrence to be negative and CHC-like.
pub fn chc_of(
    problem: &Problem,
    solution: &Solution,
    fresh: &mut FreshCounter,
) -> Result<EncodedQuery, EncodeError> {
    check_chc_hypothesis(problem, solution, Polarity::Negative)?;
    let spec = problem.substituted_spec(solution)?;
    let clauses = chc_worklist(problem, &spec, fresh)?;
    let mut q = EncodedQuery::new(QueryKind::Chc, problem, spec);
    q.clauses = clauses;
    Ok(q)
}

/// The dual encoding for positive-only specifications: every clause is
/// dualized into a co-clause over the complement relations (a greatest
/// fixed-point system), and the query asks that the complement relation does
/// not meet the described states. Solved through the fixed-point path as a
/// falsification problem.
pub fn co_chc_of(
    problem: &Problem,
    solution: &Solution,
    fresh: &mut FreshCounter,
) -> Result<EncodedQuery, EncodeError> {
    check_chc_hypothesis(problem, solution, Polarity::Positive)?;
    let spec = problem.substituted_spec(solution)?;
    // Replace Sem(t, args) by ¬Sem~(t, args) throughout the specification.
    let goal = spec.map_rel_apps(&mut |rel, term, args| {
        Formula::not(Formula::RelApp {
            rel: rel.complemented(),
            term,
            args,
        })
    });
    let clauses = chc_worklist(problem, &spec, fresh)?;
    let equations = group_and_dualize(problem, clauses, true);
    let mut q = EncodedQuery::new(QueryKind::CoChc, problem, goal);
    q.equations = sort_equations(problem, equations, DualOrder::ComplementsFirst);
    q.negate_goal = true;
    Ok(q)
}

/// Groups clauses per (relation, term) into single equations; with
/// `dualize`, every equation is complemented into its greatest fixed-point
/// dual.
fn group_and_dualize(problem: &Problem, clauses: Vec<Clause>, dualize: bool) -> Vec<Equation> {
    let mut groups: Vec<(String, Term, Vec<Clause>)> = Vec::new();
    for c in clauses {
        if let Some(g) = groups
            .iter_mut()
            .find(|(r, t, _)| *r == c.rel && *t == c.term)
        {
            g.2.push(c);
        } else {
            groups.push((c.rel.clone(), c.term.clone(), vec![c]));
        }
    }
    groups
        .into_iter()
        .map(|(rel, term, cs)| {
            let params = problem
                .semantics
                .relation(&rel)
                .expect("known relation")
                .params();
            let body = clauses_to_body(&cs);
            if dualize {
                Equation {
                    base: rel,
                    complement: true,
                    term,
                    fix: Fix::Nu,
                    params,
                    body: norm(&Formula::not(body)),
                    name: None,
                }
            } else {
                Equation {
                    base: rel,
                    complement: false,
                    term,
                    fix: Fix::Mu,
                    params,
                    body,
                    name: None,
                }
            }
        })
        .collect()
}

/// Placement of complement equations relative to their base relations in the
/// emitted order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualOrder {
    #[default]
    ComplementsFirst,
    ComplementsAfter,
}

fn sort_equations(
    problem: &Problem,
    mut equations: Vec<Equation>,
    dual_order: DualOrder,
) -> Vec<Equation> {
    // Discovery index of each term, in current equation order.
    let mut namer = ReifyNamer::new();
    let keys: Vec<(usize, usize, usize)> = equations
        .iter()
        .map(|eq| {
            let rel_rank = problem.semantics.order_index(&eq.base);
            let compl_rank = match (eq.complement, dual_order) {
                (true, DualOrder::ComplementsFirst) | (false, DualOrder::ComplementsAfter) => 0,
                _ => 1,
            };
            (rel_rank, compl_rank, namer.index_of(&eq.term))
        })
        .collect();
    let mut order: Vec<usize> = (0..equations.len()).collect();
    order.sort_by_key(|&i| keys[i]);
    let mut out = Vec::with_capacity(equations.len());
    for i in order {
        out.push(equations[i].clone());
    }
    equations.clear();
    out
}

/// The total encoding: normalizes the substituted specification, then builds
/// one fixed-point equation per (relation, subterm, polarity) reachable from
/// it — least fixed-points for plain occurrences, dualized greatest
/// fixed-points for complement occurrences — sorted by the declared relation
/// order with complements adjacent to their base relations.
pub fn muclp_of(
    problem: &Problem,
    solution: &Solution,
    dual_order: DualOrder,
) -> Result<EncodedQuery, EncodeError> {
    let spec = problem.substituted_spec(solution)?;
    let sem = &problem.semantics;
    let goal = norm(&spec);

    let mut queue: VecDeque<(String, Term, Fix)> = VecDeque::new();
    let mut seen: BTreeSet<(String, Term, Fix)> = BTreeSet::new();
    let enqueue_from = |f: &Formula,
                            queue: &mut VecDeque<(String, Term, Fix)>,
                            seen: &mut BTreeSet<(String, Term, Fix)>| {
        f.for_each_rel_app(&mut |rel, te, _| {
            if let Some(TermExpr::Const(t)) = te {
                let fix = if rel.complement { Fix::Nu } else { Fix::Mu };
                let key = (rel.base.clone(), t.clone(), fix);
                if seen.insert(key.clone()) {
                    queue.push_back(key);
                }
            }
        });
    };
    enqueue_from(&goal, &mut queue, &mut seen);

    let mut equations = Vec::new();
    while let Some((rel, term, fix)) = queue.pop_front() {
        let raw = body_for_term(sem, &rel, &term)?;
        let params = sem.relation(&rel).expect("known relation").params();
        let (complement, body) = match fix {
            Fix::Mu => (false, norm(&raw)),
            Fix::Nu => (true, norm(&Formula::not(raw))),
        };
        enqueue_from(&body, &mut queue, &mut seen);
        equations.push(Equation {
            base: rel,
            complement,
            term,
            fix,
            params,
            body,
            name: None,
        });
    }

    let mut q = EncodedQuery::new(QueryKind::Muclp, problem, goal);
    q.equations = sort_equations(problem, equations, dual_order);
    Ok(q)
}

/// Erases term arguments: every (relation, polarity, term) triple becomes a
/// standalone relation named `base[~]#i` with `i` the discovery index of the
/// term, and bodies and goal reference the new names.
pub fn reify_query(query: &EncodedQuery) -> EncodedQuery {
    let mut namer = ReifyNamer::new();
    let mut q = query.clone();
    match q.kind {
        QueryKind::Muclp | QueryKind::CoChc => {
            for eq in &mut q.equations {
                eq.name = Some(namer.name(&eq.base, eq.complement, &eq.term));
            }
            for eq in &mut q.equations {
                let mut discovered = Vec::new();
                eq.body = reify_body(&eq.body, &mut namer, &mut discovered);
            }
        }
        QueryKind::Chc => {
            let mut renamed = Vec::new();
            for c in &q.clauses {
                let name = namer.name(&c.rel, false, &c.term);
                renamed.push((name, c.clone()));
            }
            q.clauses = renamed
                .into_iter()
                .map(|(name, mut c)| {
                    let mut discovered = Vec::new();
                    c.body = reify_body(&c.body, &mut namer, &mut discovered);
                    c.rel = name;
                    c
                })
                .collect();
        }
        QueryKind::Smt => {}
    }
    let mut discovered = Vec::new();
    q.goal = reify_body(&q.goal, &mut namer, &mut discovered);
    q.reified = true;
    q
}

/// Folds non-recursive relation definitions into their callers; relations
/// referenced by the goal are kept. Requires a reified query.
pub fn inline_query(query: &EncodedQuery, fresh: &mut FreshCounter) -> EncodedQuery {
    if !query.reified {
        return query.clone();
    }
    let mut q = query.clone();
    let mut protect: BTreeSet<String> = BTreeSet::new();
    q.goal.for_each_rel_app(&mut |rel, _, _| {
        protect.insert(rel.to_string());
    });
    match q.kind {
        QueryKind::Muclp | QueryKind::CoChc => {
            let items = q
                .equations
                .iter()
                .map(|e| (e.head_name(), e.params.clone(), e.body.clone()))
                .collect();
            let folded = transform::inline_defs(items, &protect, fresh);
            q.equations = folded
                .into_iter()
                .map(|(name, params, body)| {
                    let orig = q
                        .equations
                        .iter()
                        .find(|e| e.head_name() == name)
                        .expect("inline keeps names");
                    Equation {
                        base: orig.base.clone(),
                        complement: orig.complement,
                        term: orig.term.clone(),
                        fix: orig.fix,
                        params,
                        body,
                        name: Some(name),
                    }
                })
                .collect();
        }
        QueryKind::Chc => {
            // Group per head, inline, then split back into cubes.
            let mut groups: Vec<(String, Vec<(String, Sort)>, Vec<Clause>)> = Vec::new();
            for c in &q.clauses {
                if let Some(g) = groups.iter_mut().find(|(n, _, _)| *n == c.rel) {
                    g.2.push(c.clone());
                } else {
                    groups.push((c.rel.clone(), c.params.clone(), vec![c.clone()]));
                }
            }
            let items: Vec<(String, Vec<(String, Sort)>, Formula)> = groups
                .iter()
                .map(|(n, p, cs)| (n.clone(), p.clone(), clauses_to_body(cs)))
                .collect();
            let folded = transform::inline_defs(items, &protect, fresh);
            let mut clauses = Vec::new();
            for (name, params, body) in folded {
                let term = q
                    .clauses
                    .iter()
                    .find(|c| c.rel == name)
                    .map(|c| c.term.clone())
                    .expect("inline keeps names");
                for cube in dnf_cubes(&body, fresh).expect("Horn bodies stay Horn") {
                    clauses.push(Clause {
                        rel: name.clone(),
                        term: term.clone(),
                        params: params.clone(),
                        body: cube,
                    });
                }
            }
            q.clauses = clauses;
        }
        QueryKind::Smt => {}
    }
    q
}

/// Applies best-effort quantifier elimination to every body and the goal.
pub fn qe_query(query: &EncodedQuery) -> EncodedQuery {
    let mut q = query.clone();
    for eq in &mut q.equations {
        eq.body = transform::eliminate_quantifiers(&eq.body);
    }
    for c in &mut q.clauses {
        c.body = transform::eliminate_quantifiers(&c.body);
    }
    q.goal = transform::eliminate_quantifiers(&q.goal);
    q
}

// ---------------------------------------------------------------------------
// SMT-LIB rendering
// ---------------------------------------------------------------------------

/// Quotes a symbol for SMT-LIB if it is not a simple symbol.
fn smt_symbol(name: &str) -> String {
    let simple = !name.is_empty()
        && !name.chars().next().unwrap().is_ascii_digit()
        && name.chars().all(|c| {
            c.is_ascii_alphanumeric() || "~!@$%^&*_-+=<>.?/".contains(c)
        });
    if simple {
        name.to_string()
    } else {
        format!("|{name}|")
    }
}

fn smt_sort(sort: &Sort) -> &'static str {
    match sort {
        Sort::Int => "Int",
        Sort::Bool => "Bool",
        Sort::TermSort(_) => unreachable!("term sorts are named per nonterminal"),
    }
}

fn smt_term_const(out: &mut String, t: &Term) {
    if t.children.is_empty() {
        out.push_str(&smt_symbol(&t.symbol.name));
    } else {
        out.push('(');
        out.push_str(&smt_symbol(&t.symbol.name));
        for c in &t.children {
            out.push(' ');
            smt_term_const(out, c);
        }
        out.push(')');
    }
}

fn smt_formula(out: &mut String, f: &Formula) {
    match f {
        Formula::IntConst(n) => {
            if *n < 0 {
                let _ = write!(out, "(- {})", -n);
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Formula::BoolConst(b) => {
            let _ = write!(out, "{b}");
        }
        Formula::Var(v, _) => out.push_str(&smt_symbol(v)),
        Formula::Add(a, b) => smt_binary(out, "+", a, b),
        Formula::Sub(a, b) => smt_binary(out, "-", a, b),
        Formula::Mul(c, a) => {
            let _ = write!(out, "(* ");
            smt_formula(out, &Formula::IntConst(*c));
            out.push(' ');
            smt_formula(out, a);
            out.push(')');
        }
        Formula::Cmp(op, a, b) => smt_binary(out, op.token(), a, b),
        Formula::Not(a) => {
            out.push_str("(not ");
            smt_formula(out, a);
            out.push(')');
        }
        Formula::And(fs) => smt_nary(out, "and", fs),
        Formula::Or(fs) => smt_nary(out, "or", fs),
        Formula::Implies(a, b) => smt_binary(out, "=>", a, b),
        Formula::Iff(a, b) => smt_binary(out, "=", a, b),
        Formula::Quant(q, vars, body) => {
            let _ = write!(out, "({} (", q.token());
            for (i, (v, s)) in vars.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "({} {})", smt_symbol(v), smt_sort(s));
            }
            out.push_str(") ");
            smt_formula(out, body);
            out.push(')');
        }
        Formula::RelApp { rel, term, args } => {
            out.push('(');
            out.push_str(&smt_symbol(&rel.to_string()));
            if let Some(te) = term {
                out.push(' ');
                match te {
                    TermExpr::Const(t) => smt_term_const(out, t),
                    TermExpr::Var(v, _) => out.push_str(&smt_symbol(v)),
                }
            }
            for a in args {
                out.push(' ');
                smt_formula(out, a);
            }
            out.push(')');
        }
    }
}

fn smt_binary(out: &mut String, op: &str, a: &Formula, b: &Formula) {
    let _ = write!(out, "({op} ");
    smt_formula(out, a);
    out.push(' ');
    smt_formula(out, b);
    out.push(')');
}

fn smt_nary(out: &mut String, op: &str, fs: &[Formula]) {
    if fs.is_empty() {
        out.push_str(if op == "and" { "true" } else { "false" });
        return;
    }
    if fs.len() == 1 {
        smt_formula(out, &fs[0]);
        return;
    }
    let _ = write!(out, "({op}");
    for f in fs {
        out.push(' ');
        smt_formula(out, f);
    }
    out.push(')');
}

/// Renders a closed quantified-LIA query: one assertion of the negated goal,
/// `unsat` means the solution is valid.
pub fn emit_smtlib(query: &EncodedQuery) -> Result<String, EncodeError> {
    if query.kind != QueryKind::Smt {
        return Err(EncodeError::Internal(format!(
            "emit_smtlib on a {} query",
            query.kind
        )));
    }
    let mut out = String::new();
    out.push_str("; quantified-LIA validity query\n");
    out.push_str("; unsat = the solution is valid, sat = invalid\n");
    out.push_str("(set-logic LIA)\n");
    out.push_str("(assert (not ");
    smt_formula(&mut out, &query.goal);
    out.push_str("))\n(check-sat)\n");
    Ok(out)
}

/// The sort of a relation's term argument in the unreified Horn rendering.
fn clause_term_sort(query: &EncodedQuery, clause: &Clause) -> String {
    query
        .grammar
        .productions
        .iter()
        .find(|p| p.symbol.name == clause.term.symbol.name)
        .map(|p| p.lhs.clone())
        .unwrap_or_else(|| "Term".to_string())
}

fn adt_preamble(query: &EncodedQuery) -> String {
    let g = &query.grammar;
    let mut out = String::new();
    out.push_str("(declare-datatypes (");
    for (i, nt) in g.nonterminals.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "({} 0)", smt_symbol(nt));
    }
    out.push_str(") (");
    for (i, nt) in g.nonterminals.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push('(');
        let mut first = true;
        for p in g.productions_of(nt) {
            if !first {
                out.push(' ');
            }
            first = false;
            if p.symbol.rank() == 0 {
                out.push_str(&smt_symbol(&p.symbol.name));
            } else {
                out.push('(');
                out.push_str(&smt_symbol(&p.symbol.name));
                for (k, child) in p.symbol.arg_types.iter().enumerate() {
                    let _ = write!(
                        out,
                        " ({} {})",
                        smt_symbol(&format!("{}.{}", p.symbol.name, k)),
                        smt_symbol(child)
                    );
                }
                out.push(')');
            }
        }
        out.push(')');
    }
    out.push_str("))\n");
    out
}

/// Renders a Horn-clause script (`HORN` logic): every clause becomes a
/// universally quantified implication, and the negated specification becomes
/// clauses with head `false`. By the usual solver convention `sat` means the
/// specification holds under the least solution and `unsat` means it is
/// violated. Unreified clause systems declare the grammar as algebraic data
/// types.
pub fn emit_horn(query: &EncodedQuery) -> Result<String, EncodeError> {
    if query.kind != QueryKind::Chc {
        return Err(EncodeError::Internal(format!(
            "emit_horn on a {} query",
            query.kind
        )));
    }
    let mut out = String::new();
    out.push_str("; constrained-Horn-clause query\n");
    out.push_str("; sat = the solution is valid, unsat = invalid\n");
    out.push_str("(set-logic HORN)\n");
    if !query.reified {
        out.push_str(&adt_preamble(query));
    }

    // Declarations, first occurrence order.
    let mut declared: BTreeSet<String> = BTreeSet::new();
    for c in &query.clauses {
        if declared.insert(c.rel.clone()) {
            let _ = write!(out, "(declare-fun {} (", smt_symbol(&c.rel));
            let mut first = true;
            if !query.reified {
                let _ = write!(out, "{}", smt_symbol(&clause_term_sort(query, c)));
                first = false;
            }
            for (_, s) in &c.params {
                if !first {
                    out.push(' ');
                }
                first = false;
                out.push_str(smt_sort(s));
            }
            out.push_str(") Bool)\n");
        }
    }

    let clause_head = |c: &Clause| -> Formula {
        Formula::RelApp {
            rel: RelName::plain(c.rel.clone()),
            term: if query.reified {
                None
            } else {
                Some(TermExpr::Const(c.term.clone()))
            },
            args: c
                .params
                .iter()
                .map(|(n, s)| Formula::Var(n.clone(), s.clone()))
                .collect(),
        }
    };

    for c in &query.clauses {
        let head = clause_head(c);
        let mut vars: Vec<(String, Sort)> = c.params.clone();
        for (n, s) in c.body.free_vars() {
            if matches!(s, Sort::TermSort(_)) {
                continue;
            }
            if !vars.iter().any(|(v, _)| *v == n) {
                vars.push((n, s));
            }
        }
        let imp = Formula::implies(c.body.clone(), head);
        out.push_str("(assert ");
        smt_formula(&mut out, &Formula::forall(vars, imp));
        out.push_str(")\n");
    }

    // Negated specification as false-headed clauses.
    let mut fresh = FreshCounter::new();
    let negated = norm(&Formula::not(query.goal.clone()));
    let negated = negated.map_rel_apps(&mut |rel, term, args| Formula::RelApp {
        // Complements in the negated spec are the original relations again.
        rel: RelName::plain(if rel.complement {
            rel.base.clone()
        } else {
            return Formula::RelApp { rel, term, args };
        }),
        term,
        args,
    });
    let cubes = dnf_cubes(&negated, &mut fresh)
        .map_err(|e| EncodeError::NotHornQuery(e.to_string()))?;
    for cube in cubes {
        let mut vars: Vec<(String, Sort)> = Vec::new();
        for (n, s) in cube.free_vars() {
            if !matches!(s, Sort::TermSort(_)) {
                vars.push((n, s));
            }
        }
        let imp = Formula::implies(cube, Formula::BoolConst(false));
        out.push_str("(assert ");
        smt_formula(&mut out, &Formula::forall(vars, imp));
        out.push_str(")\n");
    }
    out.push_str("(check-sat)\n");
    Ok(out)
}

/// Renders the canonical fixed-point format: a goal, `s.t.`, and ordered
/// equations `NAME(params): Bool =mu|=nu BODY;`. Requires a reified query.
pub fn emit_muclp(query: &EncodedQuery) -> Result<String, EncodeError> {
    if !matches!(query.kind, QueryKind::Muclp | QueryKind::CoChc) {
        return Err(EncodeError::Internal(format!(
            "emit_muclp on a {} query",
            query.kind
        )));
    }
    if !query.reified
        || query.equations.iter().any(|e| e.name.is_none())
        || query.goal_has_terms()
    {
        return Err(EncodeError::NotReified);
    }
    let mut out = String::new();
    out.push_str("; muclp-v1\n");
    if query.negate_goal {
        out.push_str("; polarity: negated (the query is valid iff the goal is unsatisfied)\n");
    }
    for eq in &query.equations {
        let _ = writeln!(
            out,
            "; {} := {}{} at {}",
            eq.name.as_deref().unwrap_or("?"),
            eq.base,
            if eq.complement { "~" } else { "" },
            eq.term
        );
    }
    let goal = if query.negate_goal {
        norm(&Formula::not(query.goal.clone()))
    } else {
        query.goal.clone()
    };
    let _ = writeln!(out, "{}", crate::frontend::print_formula(&goal));
    out.push_str("s.t.\n");
    for eq in &query.equations {
        let _ = write!(out, "{}(", eq.name.as_deref().unwrap());
        for (i, (n, s)) in eq.params.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{n}: {s}");
        }
        let _ = writeln!(
            out,
            "): Bool {} {};",
            eq.fix.token(),
            crate::frontend::print_formula(&eq.body)
        );
    }
    Ok(out)
}

impl EncodedQuery {
    fn goal_has_terms(&self) -> bool {
        let mut found = false;
        self.goal.for_each_rel_app(&mut |_, te, _| {
            if te.is_some() {
                found = true;
            }
        });
        found
    }
}

/// Fills a plain-text dialect template: `{{goal}}` and `{{equations}}` are
/// replaced by the rendered canonical forms.
pub fn emit_muclp_with_template(
    query: &EncodedQuery,
    template: &str,
) -> Result<String, EncodeError> {
    let canonical = emit_muclp(query)?;
    let mut goal = String::new();
    let mut equations = String::new();
    let mut in_eqs = false;
    for line in canonical.lines() {
        if line.starts_with(';') {
            continue;
        }
        if line == "s.t." {
            in_eqs = true;
            continue;
        }
        if in_eqs {
            equations.push_str(line);
            equations.push('\n');
        } else {
            goal.push_str(line);
            goal.push('\n');
        }
    }
    Ok(template
        .replace("{{goal}}", goal.trim_end())
        .replace("{{equations}}", equations.trim_end()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Quantifier;
    use crate::frontend::{parse_problem, parse_solution};

    fn load(problem: &str, solution: &str) -> (Problem, Solution) {
        let p = parse_problem(problem, "p.sem").expect("problem parses").problem;
        let s = parse_solution(solution, "s.sol", &p).expect("solution parses");
        (p, s)
    }

    fn max2() -> (Problem, Solution) {
        load(
            include_str!("../../../fixtures/max2.sem"),
            include_str!("../../../fixtures/max2.sol"),
        )
    }

    fn loop_tot() -> (Problem, Solution) {
        load(
            include_str!("../../../fixtures/loop_tot.sem"),
            include_str!("../../../fixtures/loop.sol"),
        )
    }

    fn loop_chc() -> (Problem, Solution) {
        load(
            include_str!("../../../fixtures/loop.sem"),
            include_str!("../../../fixtures/loop.sol"),
        )
    }

    #[test]
    fn smt_formula_of_leaves_no_relations() {
        let (p, s) = max2();
        let mut fresh = FreshCounter::new();
        let q = smt_formula_of(&p, &s, &mut fresh).unwrap();
        assert!(!q.goal.contains_rel_apps());
    }

    #[test]
    fn smt_formula_of_spec_without_relations_is_unchanged() {
        let (mut p, s) = max2();
        p.spec = Formula::forall(
            vec![("x".into(), Sort::Int)],
            Formula::eq(Formula::var("x", Sort::Int), Formula::var("x", Sort::Int)),
        );
        let mut fresh = FreshCounter::new();
        let q = smt_formula_of(&p, &s, &mut fresh).unwrap();
        assert_eq!(q.goal, p.spec);
    }

    #[test]
    fn smt_formula_of_rejects_recursive_terms() {
        let (p, s) = loop_tot();
        let mut fresh = FreshCounter::new();
        match smt_formula_of(&p, &s, &mut fresh) {
            Err(EncodeError::Hypothesis(msg)) => {
                assert!(msg.contains("recursive"), "{msg}")
            }
            other => panic!("expected a recursion error, got {other:?}"),
        }
    }

    #[test]
    fn chc_of_requires_negative_occurrences() {
        let (p, s) = loop_tot();
        let mut fresh = FreshCounter::new();
        match chc_of(&p, &s, &mut fresh) {
            Err(EncodeError::Hypothesis(msg)) => assert!(msg.contains("positive"), "{msg}"),
            other => panic!("expected a hypothesis error, got {other:?}"),
        }
    }

    #[test]
    fn chc_of_collects_reachable_clauses() {
        let (p, s) = loop_chc();
        let mut fresh = FreshCounter::new();
        let q = chc_of(&p, &s, &mut fresh).unwrap();
        assert!(!q.clauses.is_empty());
        // The while rule contributes two clauses (loop and exit).
        let whiles: Vec<_> = q
            .clauses
            .iter()
            .filter(|c| c.term.symbol.name == "while")
            .collect();
        assert_eq!(whiles.len(), 2);
    }

    #[test]
    fn chc_of_with_trivial_spec_has_no_rules() {
        let (mut p, s) = loop_chc();
        p.spec = Formula::BoolConst(true);
        let mut fresh = FreshCounter::new();
        let q = chc_of(&p, &s, &mut fresh).unwrap();
        assert!(q.clauses.is_empty());
        assert_eq!(q.goal, Formula::BoolConst(true));
    }

    #[test]
    fn co_chc_goal_matches_dual_shape() {
        let (p, s) = loop_tot();
        let mut fresh = FreshCounter::new();
        let q = co_chc_of(&p, &s, &mut fresh).unwrap();
        // goal: ∀x,yp. (0 ≤ x ∧ 2x = yp) ⇒ ¬Sem_L~(s_loop, x, 0, 0, yp)
        let mut found = false;
        q.goal.for_each_rel_app(&mut |rel, te, _| {
            if rel.base == "Sem_L" && rel.complement {
                assert!(matches!(te, Some(TermExpr::Const(_))));
                found = true;
            }
        });
        assert!(found);
        assert!(q.negate_goal);
        assert!(q.equations.iter().all(|e| e.fix == Fix::Nu && e.complement));
    }

    #[test]
    fn muclp_of_loop_tot_is_mu_only() {
        let (p, s) = loop_tot();
        let q = muclp_of(&p, &s, DualOrder::default()).unwrap();
        assert!(q.equations.iter().all(|e| e.fix == Fix::Mu));
        assert!(transform::only_positive_rels(&q.goal));
        for eq in &q.equations {
            assert!(transform::only_positive_rels(&eq.body));
        }
    }

    #[test]
    fn muclp_of_hyperproperty_combines_both_polarities() {
        let (p, s) = load(
            include_str!("../../../fixtures/loop_comm.sem"),
            include_str!("../../../fixtures/plus.sol"),
        );
        let q = muclp_of(&p, &s, DualOrder::default()).unwrap();
        let has_plain = q.equations.iter().any(|e| e.base == "Sem_L" && !e.complement);
        let has_compl = q.equations.iter().any(|e| e.base == "Sem_L" && e.complement);
        assert!(has_plain && has_compl);
        // goal: ∀... Sem_L~(s, x, y, xp, yp) ∨ Sem_L(s, y, x, xp, yp)
        match &q.goal {
            Formula::Quant(Quantifier::Forall, _, body) => match &**body {
                Formula::Or(parts) => {
                    assert_eq!(parts.len(), 2);
                    match (&parts[0], &parts[1]) {
                        (
                            Formula::RelApp { rel: r1, .. },
                            Formula::RelApp { rel: r2, .. },
                        ) => {
                            assert!(r1.complement);
                            assert!(!r2.complement);
                        }
                        other => panic!("unexpected goal shape {other:?}"),
                    }
                }
                other => panic!("expected a disjunction, got {other:?}"),
            },
            other => panic!("expected a universal goal, got {other:?}"),
        }
    }

    #[test]
    fn complements_sort_adjacent_and_first() {
        let (p, s) = load(
            include_str!("../../../fixtures/loop_comm.sem"),
            include_str!("../../../fixtures/plus.sol"),
        );
        let q = muclp_of(&p, &s, DualOrder::default()).unwrap();
        // For each base relation, all complement equations precede all plain
        // equations, and bases follow the declared order.
        let mut last_key = None;
        for eq in &q.equations {
            let key = (
                p.semantics.order_index(&eq.base),
                if eq.complement { 0 } else { 1 },
            );
            if let Some(prev) = last_key {
                assert!(key >= prev, "equations out of order");
            }
            last_key = Some(key);
        }
    }

    #[test]
    fn muclp_emission_requires_reification() {
        let (p, s) = loop_tot();
        let q = muclp_of(&p, &s, DualOrder::default()).unwrap();
        assert!(matches!(emit_muclp(&q), Err(EncodeError::NotReified)));
        let reified = reify_query(&q);
        assert!(emit_muclp(&reified).is_ok());
    }

    #[test]
    fn emitters_are_deterministic() {
        let (p, s) = loop_tot();
        let render = || {
            let q = reify_query(&muclp_of(&p, &s, DualOrder::default()).unwrap());
            emit_muclp(&q).unwrap()
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn emit_smtlib_negates_the_goal() {
        let (p, s) = max2();
        let mut fresh = FreshCounter::new();
        let q = smt_formula_of(&p, &s, &mut fresh).unwrap();
        let text = emit_smtlib(&q).unwrap();
        assert!(text.contains("(set-logic LIA)"));
        assert!(text.contains("(assert (not "));
        assert!(text.contains("(check-sat)"));
    }

    #[test]
    fn emit_horn_renders_clauses_and_query() {
        let (p, s) = loop_chc();
        let mut fresh = FreshCounter::new();
        let q = chc_of(&p, &s, &mut fresh).unwrap();
        let reified = reify_query(&q);
        let text = emit_horn(&reified).unwrap();
        assert!(text.contains("(set-logic HORN)"));
        assert!(text.contains("declare-fun"));
        assert!(text.contains("false"));
        // Unreified rendering declares datatypes instead.
        let text2 = emit_horn(&q).unwrap();
        assert!(text2.contains("declare-datatypes"));
    }

    #[test]
    fn template_substitution_fills_placeholders() {
        let (p, s) = loop_tot();
        let q = reify_query(&muclp_of(&p, &s, DualOrder::default()).unwrap());
        let text =
            emit_muclp_with_template(&q, "GOAL:\n{{goal}}\nEQS:\n{{equations}}").unwrap();
        assert!(text.starts_with("GOAL:"));
        assert!(text.contains("EQS:"));
        assert!(!text.contains("{{"));
    }
}
