//! Formula and rule transformations: rule instantiation, normalization to
//! complement relations, dualization, disjunctive normal form, reification
//! and inlining, and best-effort quantifier elimination.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::formula::{
    and_of, ff, fresh_name, or_of, tt, Formula, FreshCounter, Quantifier, RelName, Sort, Subst,
    TermExpr,
};
use crate::semantics::{FixpointEquation, Semantics, SemanticsError};
use crate::term::Term;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransformError {
    #[error("cannot expand symbolic term {0}")]
    SymbolicTerm(String),
    #[error("body contains a universal quantifier; not in the Horn fragment")]
    UniversalQuantifier,
    #[error("body contains a negative relation occurrence; not in the Horn fragment")]
    NegativeRelation,
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error("expansion revisits {relation} on the same term; the derivation is recursive")]
    Recursive { relation: String },
}

/// Appends or strips the complement marker of a rendered relation name.
pub fn complement_name(name: &str) -> String {
    match name.strip_suffix('~') {
        Some(base) => base.to_string(),
        None => format!("{name}~"),
    }
}

/// The rule body for a relation at a concrete term: term parameters are
/// replaced by the term and its children. State parameters stay formal.
pub fn body_for_term(sem: &Semantics, rel: &str, term: &Term) -> Result<Formula, TransformError> {
    let rule = sem.rule_of(rel, &term.symbol.name)?;
    let relation = sem.relation(rel).expect("rule_of checked the relation");
    let mut body = rule
        .body
        .substitute(
            &relation.term_param,
            &Subst::Term(TermExpr::Const(term.clone())),
        )
        .expect("term substitution is total");
    for (child_var, child) in rule.child_term_params.iter().zip(&term.children) {
        body = body
            .substitute(child_var, &Subst::Term(TermExpr::Const(child.clone())))
            .expect("term substitution is total");
    }
    Ok(body)
}

/// Renames every bound variable to a fresh `!n` name. Instantiated rule
/// bodies go through this so repeated expansions of the same rule never
/// share binder names.
pub fn freshen_binders(f: &Formula, fresh: &mut FreshCounter) -> Formula {
    match f {
        Formula::Quant(q, vars, body) => {
            let mut body = freshen_binders(body, fresh);
            let mut new_vars = Vec::new();
            for (v, sort) in vars {
                let nv = fresh.next(v);
                body = body
                    .substitute(v, &Subst::Expr(Formula::Var(nv.clone(), sort.clone())))
                    .expect("renaming preserves sorts");
                new_vars.push((nv, sort.clone()));
            }
            Formula::Quant(*q, new_vars, Box::new(body))
        }
        Formula::Not(a) => Formula::not(freshen_binders(a, fresh)),
        Formula::And(fs) => Formula::And(fs.iter().map(|x| freshen_binders(x, fresh)).collect()),
        Formula::Or(fs) => Formula::Or(fs.iter().map(|x| freshen_binders(x, fresh)).collect()),
        Formula::Implies(a, b) => {
            Formula::implies(freshen_binders(a, fresh), freshen_binders(b, fresh))
        }
        Formula::Iff(a, b) => Formula::iff(freshen_binders(a, fresh), freshen_binders(b, fresh)),
        Formula::Add(a, b) => Formula::Add(
            Box::new(freshen_binders(a, fresh)),
            Box::new(freshen_binders(b, fresh)),
        ),
        Formula::Sub(a, b) => Formula::Sub(
            Box::new(freshen_binders(a, fresh)),
            Box::new(freshen_binders(b, fresh)),
        ),
        Formula::Mul(c, a) => Formula::Mul(*c, Box::new(freshen_binders(a, fresh))),
        Formula::Cmp(op, a, b) => Formula::Cmp(
            *op,
            Box::new(freshen_binders(a, fresh)),
            Box::new(freshen_binders(b, fresh)),
        ),
        Formula::RelApp { rel, term, args } => Formula::RelApp {
            rel: rel.clone(),
            term: term.clone(),
            args: args.iter().map(|a| freshen_binders(a, fresh)).collect(),
        },
        _ => f.clone(),
    }
}

/// Replaces formal parameters by actual argument expressions simultaneously
/// (safe even when an argument mentions a later parameter's name).
pub fn instantiate(
    body: &Formula,
    params: &[(String, Sort)],
    args: &[Formula],
    fresh: &mut FreshCounter,
) -> Formula {
    debug_assert_eq!(params.len(), args.len());
    let mut f = freshen_binders(body, fresh);
    let temps: Vec<String> = params.iter().map(|(p, _)| fresh.next(p)).collect();
    for ((p, sort), t) in params.iter().zip(&temps) {
        f = f
            .substitute(p, &Subst::Expr(Formula::Var(t.clone(), sort.clone())))
            .expect("renaming preserves sorts");
    }
    for (t, arg) in temps.iter().zip(args) {
        f = f
            .substitute(t, &Subst::Expr(arg.clone()))
            .expect("instantiation arguments are sort-checked upstream");
    }
    f
}

/// The defining formula of a relation application on a ground term: the rule
/// body with the formal term and state parameters replaced by the actual
/// arguments, bound variables freshened.
pub fn phi_of(
    sem: &Semantics,
    app: &Formula,
    fresh: &mut FreshCounter,
) -> Result<Formula, TransformError> {
    let Formula::RelApp { rel, term, args } = app else {
        panic!("phi_of expects a relation application");
    };
    let term = match term {
        Some(TermExpr::Const(t)) => t,
        Some(TermExpr::Var(v, _)) => return Err(TransformError::SymbolicTerm(v.clone())),
        None => return Err(TransformError::SymbolicTerm("<reified>".to_string())),
    };
    let body = body_for_term(sem, &rel.base, term)?;
    let relation = sem.relation(&rel.base).expect("known relation");
    Ok(instantiate(&body, &relation.params(), args, fresh))
}

/// Negation normal form in which every relation occurrence is positive:
/// negated applications become applications of the complement relation.
pub fn norm(f: &Formula) -> Formula {
    fn push(f: &Formula) -> Formula {
        match f {
            Formula::Not(inner) => match &**inner {
                Formula::RelApp { rel, term, args } => Formula::RelApp {
                    rel: rel.clone().complemented(),
                    term: term.clone(),
                    args: args.clone(),
                },
                other => Formula::not(push(other)),
            },
            Formula::And(fs) => Formula::And(fs.iter().map(push).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(push).collect()),
            Formula::Quant(q, vars, body) => Formula::Quant(*q, vars.clone(), Box::new(push(body))),
            Formula::Implies(a, b) => Formula::implies(push(a), push(b)),
            Formula::Iff(a, b) => Formula::iff(push(a), push(b)),
            other => other.clone(),
        }
    }
    push(&f.nnf())
}

/// True when no relation occurs under a negation (the postcondition of
/// [`norm`]).
pub fn only_positive_rels(f: &Formula) -> bool {
    use crate::analysis::Polarity;
    crate::analysis::spec_polarity(f)
        .values()
        .all(|p| matches!(p, Polarity::Positive | Polarity::Absent))
}

/// The dual fixed-point equation: complement relation, flipped marker, body
/// `norm(¬body)`.
pub fn dual_equation(eq: &FixpointEquation) -> FixpointEquation {
    FixpointEquation {
        name: complement_name(&eq.name),
        fix: eq.fix.dual(),
        params: eq.params.clone(),
        body: norm(&Formula::not(eq.body.clone())),
    }
}

/// Splits a Horn-fragment body into cubes: existential quantifiers are
/// erased after freshening, and the matrix is put in disjunctive normal
/// form. Each cube is a conjunction of literals and relation applications.
pub fn dnf_cubes(f: &Formula, fresh: &mut FreshCounter) -> Result<Vec<Formula>, TransformError> {
    let nnf = f.nnf();
    let erased = erase_existentials(&nnf, fresh)?;
    let mut cubes = Vec::new();
    distribute(&erased, &mut cubes)?;
    Ok(cubes.into_iter().map(and_of).collect())
}

fn erase_existentials(f: &Formula, fresh: &mut FreshCounter) -> Result<Formula, TransformError> {
    match f {
        Formula::Quant(Quantifier::Forall, _, _) => Err(TransformError::UniversalQuantifier),
        Formula::Quant(Quantifier::Exists, vars, body) => {
            let mut body = (**body).clone();
            for (v, sort) in vars {
                let nv = fresh.next(v);
                body = body
                    .substitute(v, &Subst::Expr(Formula::Var(nv, sort.clone())))
                    .expect("renaming preserves sorts");
            }
            erase_existentials(&body, fresh)
        }
        Formula::And(fs) => Ok(Formula::And(
            fs.iter()
                .map(|x| erase_existentials(x, fresh))
                .collect::<Result<_, _>>()?,
        )),
        Formula::Or(fs) => Ok(Formula::Or(
            fs.iter()
                .map(|x| erase_existentials(x, fresh))
                .collect::<Result<_, _>>()?,
        )),
        Formula::Not(inner) => {
            if matches!(**inner, Formula::RelApp { .. }) {
                return Err(TransformError::NegativeRelation);
            }
            Ok(f.clone())
        }
        Formula::RelApp { rel, .. } if rel.complement => Err(TransformError::NegativeRelation),
        other => Ok(other.clone()),
    }
}

fn distribute(f: &Formula, out: &mut Vec<Vec<Formula>>) -> Result<(), TransformError> {
    match f {
        Formula::And(fs) => {
            let mut acc: Vec<Vec<Formula>> = vec![Vec::new()];
            for part in fs {
                let mut sub = Vec::new();
                distribute(part, &mut sub)?;
                let mut next = Vec::new();
                for prefix in &acc {
                    for cube in &sub {
                        let mut c = prefix.clone();
                        c.extend(cube.iter().cloned());
                        next.push(c);
                    }
                }
                acc = next;
            }
            out.extend(acc);
            Ok(())
        }
        Formula::Or(fs) => {
            for part in fs {
                distribute(part, out)?;
            }
            Ok(())
        }
        other => {
            out.push(vec![other.clone()]);
            Ok(())
        }
    }
}

/// A Horn clause `rel(term, params) <- body` where the body is one cube.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    pub rel: String,
    pub term: Term,
    pub params: Vec<(String, Sort)>,
    pub body: Formula,
}

/// The set of Horn clauses equivalent to the rule of `rel` at `term`'s root
/// production: one clause per cube of the body's disjunctive normal form.
pub fn rules_of(
    sem: &Semantics,
    rel: &str,
    term: &Term,
    fresh: &mut FreshCounter,
) -> Result<Vec<Clause>, TransformError> {
    let body = body_for_term(sem, rel, term)?;
    let params = sem.relation(rel).expect("known relation").params();
    let cubes = dnf_cubes(&body, fresh)?;
    Ok(cubes
        .into_iter()
        .map(|body| Clause {
            rel: rel.to_string(),
            term: term.clone(),
            params: params.clone(),
            body,
        })
        .collect())
}

/// Combines per-(relation, term) clauses back into one disjunctive body,
/// re-binding each cube's auxiliary variables existentially.
pub fn clauses_to_body(clauses: &[Clause]) -> Formula {
    match clauses {
        [] => ff(),
        cs => or_of(
            cs.iter()
                .map(|c| close_cube(&c.body, &c.params))
                .collect::<Vec<_>>(),
        ),
    }
}

/// `∃ leftovers. cube`, binding the free variables of a cube that are not
/// among the given parameters.
pub fn close_cube(cube: &Formula, params: &[(String, Sort)]) -> Formula {
    let mut extra: Vec<(String, Sort)> = cube
        .free_vars()
        .into_iter()
        .filter(|(n, s)| !matches!(s, Sort::TermSort(_)) && !params.iter().any(|(p, _)| p == n))
        .collect();
    extra.sort();
    Formula::exists(extra, cube.clone())
}

/// Assigns stable names to (relation, term) pairs: the `n`-th distinct term
/// discovered gets index `n`, and the reified name is `base#n` (with the
/// complement marker before `#`).
#[derive(Debug, Default, Clone)]
pub struct ReifyNamer {
    terms: Vec<Term>,
}

impl ReifyNamer {
    pub fn new() -> ReifyNamer {
        ReifyNamer::default()
    }

    pub fn index_of(&mut self, term: &Term) -> usize {
        if let Some(i) = self.terms.iter().position(|t| t == term) {
            i
        } else {
            self.terms.push(term.clone());
            self.terms.len() - 1
        }
    }

    pub fn name(&mut self, base: &str, complement: bool, term: &Term) -> String {
        let idx = self.index_of(term);
        if complement {
            format!("{base}~#{idx}")
        } else {
            format!("{base}#{idx}")
        }
    }

    pub fn term_at(&self, idx: usize) -> Option<&Term> {
        self.terms.get(idx)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }
}

/// One rule of a reified rule set: the semantics of `base` specialized to
/// `term`, with the term argument erased from the signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReifiedRule {
    pub name: String,
    pub base: String,
    pub term: Term,
    pub params: Vec<(String, Sort)>,
    pub body: Formula,
}

/// Closure of reified rules seeded at one (relation, term) pair. Structurally
/// identical subterms share a reified relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReifiedRuleSet {
    /// Reified name of the seed pair.
    pub root: String,
    pub rules: Vec<ReifiedRule>,
}

impl ReifiedRuleSet {
    pub fn rule(&self, name: &str) -> Option<&ReifiedRule> {
        self.rules.iter().find(|r| r.name == name)
    }

    /// Every reified relation appearing in any body is itself defined.
    pub fn is_closed(&self) -> bool {
        let defined: BTreeSet<&str> = self.rules.iter().map(|r| r.name.as_str()).collect();
        self.rules.iter().all(|r| {
            let mut ok = true;
            r.body.for_each_rel_app(&mut |rel, _, _| {
                if !defined.contains(rel.base.as_str()) {
                    ok = false;
                }
            });
            ok
        })
    }
}

/// Rewrites a body's relation applications (which carry ground terms after
/// [`body_for_term`]) into applications of reified relations.
pub fn reify_body(
    body: &Formula,
    namer: &mut ReifyNamer,
    discovered: &mut Vec<(String, bool, Term)>,
) -> Formula {
    body.map_rel_apps(&mut |rel, term, args| {
        let t = match term {
            Some(TermExpr::Const(t)) => t,
            Some(TermExpr::Var(v, _)) => {
                unreachable!("reify_body applied to a body with symbolic term {v}")
            }
            None => return Formula::RelApp { rel, term: None, args },
        };
        let name = namer.name(&rel.base, rel.complement, &t);
        discovered.push((rel.base.clone(), rel.complement, t));
        Formula::RelApp {
            rel: RelName::plain(name),
            term: None,
            args,
        }
    })
}

/// The least closure of reified relations reachable from `(rel, term)`: each
/// reified relation's body is the original rule body with every application
/// replaced by its reified counterpart.
pub fn reify(sem: &Semantics, rel: &str, term: &Term) -> Result<ReifiedRuleSet, TransformError> {
    let mut namer = ReifyNamer::new();
    let root = namer.name(rel, false, term);
    let mut queue: VecDeque<(String, Term)> = VecDeque::new();
    let mut seen: BTreeSet<(String, Term)> = BTreeSet::new();
    queue.push_back((rel.to_string(), term.clone()));
    seen.insert((rel.to_string(), term.clone()));
    let mut rules = Vec::new();
    while let Some((r, t)) = queue.pop_front() {
        let body = body_for_term(sem, &r, &t)?;
        let mut discovered = Vec::new();
        let body = reify_body(&body, &mut namer, &mut discovered);
        rules.push(ReifiedRule {
            name: namer.name(&r, false, &t),
            base: r.clone(),
            term: t.clone(),
            params: sem.relation(&r).expect("known relation").params(),
            body,
        });
        for (r2, _, t2) in discovered {
            if seen.insert((r2.clone(), t2.clone())) {
                queue.push_back((r2, t2));
            }
        }
    }
    Ok(ReifiedRuleSet { root, rules })
}

/// Shared inlining core over (name, params, body) triples. Definitions of
/// non-recursive relations are folded into every referencing body; relations
/// in `protect` are never dropped. Returns the surviving triples in the
/// original order.
pub fn inline_defs(
    items: Vec<(String, Vec<(String, Sort)>, Formula)>,
    protect: &BTreeSet<String>,
    fresh: &mut FreshCounter,
) -> Vec<(String, Vec<(String, Sort)>, Formula)> {
    let names: Vec<String> = items.iter().map(|(n, _, _)| n.clone()).collect();
    let index: BTreeMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let refs = |body: &Formula| -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        body.for_each_rel_app(&mut |rel, _, _| {
            let rendered = rel.to_string();
            if let Some(&i) = index.get(rendered.as_str()) {
                out.insert(i);
            }
        });
        out
    };
    let graph: Vec<BTreeSet<usize>> = items.iter().map(|(_, _, b)| refs(b)).collect();
    let recursive = cyclic_nodes(&graph);

    // Fold in dependency order so every inlinable definition is fully folded
    // before it is used.
    let order = topo_order(&graph);
    let mut bodies: Vec<Formula> = items.iter().map(|(_, _, b)| b.clone()).collect();
    for &i in &order {
        if recursive.contains(&i) {
            continue;
        }
        let def_params = items[i].1.clone();
        let def_name = names[i].clone();
        let def_body = bodies[i].clone();
        for (j, body) in bodies.iter_mut().enumerate() {
            if i == j {
                continue;
            }
            *body = body.map_rel_apps(&mut |rel, term, args| {
                if rel.to_string() == def_name {
                    instantiate(&def_body, &def_params, &args, fresh)
                } else {
                    Formula::RelApp { rel, term, args }
                }
            });
        }
    }

    // Keep protected relations and anything still referenced from them.
    let post_graph: Vec<BTreeSet<usize>> = bodies.iter().map(&refs).collect();
    let mut live: BTreeSet<usize> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| protect.contains(*n))
        .map(|(i, _)| i)
        .collect();
    let mut queue: VecDeque<usize> = live.iter().copied().collect();
    while let Some(i) = queue.pop_front() {
        for &j in &post_graph[i] {
            if live.insert(j) {
                queue.push_back(j);
            }
        }
    }
    items
        .into_iter()
        .enumerate()
        .filter(|(i, _)| live.contains(i))
        .map(|(i, (n, p, _))| (n, p, bodies[i].clone()))
        .collect()
}

/// Indices that sit on a reference cycle (including self-loops).
fn cyclic_nodes(graph: &[BTreeSet<usize>]) -> BTreeSet<usize> {
    let n = graph.len();
    let mut out = BTreeSet::new();
    for start in 0..n {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<usize> = graph[start].iter().copied().collect();
        while let Some(i) = queue.pop_front() {
            if i == start {
                out.insert(start);
                break;
            }
            if seen.insert(i) && i < n {
                queue.extend(graph[i].iter().copied());
            }
        }
    }
    out
}

/// Dependencies-first order; nodes on cycles appear in index order, which is
/// fine because cyclic nodes are never folded.
fn topo_order(graph: &[BTreeSet<usize>]) -> Vec<usize> {
    fn visit(i: usize, graph: &[BTreeSet<usize>], state: &mut [u8], out: &mut Vec<usize>) {
        if state[i] != 0 {
            return;
        }
        state[i] = 1;
        for &j in &graph[i] {
            if state[j] == 0 {
                visit(j, graph, state, out);
            }
        }
        state[i] = 2;
        out.push(i);
    }
    let n = graph.len();
    let mut state = vec![0u8; n];
    let mut out = Vec::new();
    for i in 0..n {
        visit(i, graph, &mut state, &mut out);
    }
    out
}

/// Inlines non-recursive reified relations into their callers and drops the
/// ones no longer referenced. The root relation always survives.
pub fn inline(set: &ReifiedRuleSet, fresh: &mut FreshCounter) -> ReifiedRuleSet {
    let mut protect = BTreeSet::new();
    protect.insert(set.root.clone());
    let items = set
        .rules
        .iter()
        .map(|r| (r.name.clone(), r.params.clone(), r.body.clone()))
        .collect();
    let folded = inline_defs(items, &protect, fresh);
    let rules = folded
        .into_iter()
        .map(|(name, params, body)| {
            let orig = set.rule(&name).expect("inline keeps existing names");
            ReifiedRule {
                name,
                base: orig.base.clone(),
                term: orig.term.clone(),
                params,
                body,
            }
        })
        .collect();
    ReifiedRuleSet {
        root: set.root.clone(),
        rules,
    }
}

/// Best-effort quantifier elimination: the one-point rule for defining
/// (dis)equalities, removal of unused binders, and flattening of adjacent
/// binders. Equivalence-preserving; quantifiers may remain.
pub fn eliminate_quantifiers(f: &Formula) -> Formula {
    match f {
        Formula::Quant(q, vars, body) => {
            let body = eliminate_quantifiers(body);
            let (vars, body) = match body {
                Formula::Quant(q2, vars2, inner) if q2 == *q => {
                    let mut vs = vars.clone();
                    vs.extend(vars2);
                    (vs, *inner)
                }
                other => (vars.clone(), other),
            };
            match q {
                Quantifier::Exists => one_point_exists(vars, body),
                Quantifier::Forall => {
                    // ∀x̄. φ = ¬∃x̄. ¬φ
                    let dual_body = Formula::not(body).nnf();
                    let reduced = one_point_exists(vars, dual_body);
                    match reduced {
                        Formula::Quant(Quantifier::Exists, vs, inner) => Formula::Quant(
                            Quantifier::Forall,
                            vs,
                            Box::new(Formula::not(*inner).nnf()),
                        ),
                        other => Formula::not(other).nnf(),
                    }
                }
            }
        }
        Formula::Not(a) => Formula::not(eliminate_quantifiers(a)),
        Formula::And(fs) => Formula::And(fs.iter().map(eliminate_quantifiers).collect()),
        Formula::Or(fs) => Formula::Or(fs.iter().map(eliminate_quantifiers).collect()),
        Formula::Implies(a, b) => {
            Formula::implies(eliminate_quantifiers(a), eliminate_quantifiers(b))
        }
        Formula::Iff(a, b) => Formula::iff(eliminate_quantifiers(a), eliminate_quantifiers(b)),
        Formula::RelApp { rel, term, args } => Formula::RelApp {
            rel: rel.clone(),
            term: term.clone(),
            args: args.iter().map(eliminate_quantifiers).collect(),
        },
        other => other.clone(),
    }
}

/// `∃ vars. body` with one-point reductions applied: a conjunct `x = t` (or
/// `t = x`) with `x ∈ vars`, `x ∉ FV(t)` lets us substitute `t` for `x`.
fn one_point_exists(vars: Vec<(String, Sort)>, body: Formula) -> Formula {
    let mut vars = vars;
    let mut body = body;
    loop {
        // Drop binders that no longer occur.
        let fv = body.free_vars();
        vars.retain(|(v, _)| fv.iter().any(|(n, _)| n == v));
        if vars.is_empty() {
            return body;
        }
        fn flatten(f: &Formula, out: &mut Vec<Formula>) {
            match f {
                Formula::And(fs) => fs.iter().for_each(|x| flatten(x, out)),
                other => out.push(other.clone()),
            }
        }
        let mut conjuncts: Vec<Formula> = Vec::new();
        flatten(&body, &mut conjuncts);
        let mut progressed = false;
        for (ci, c) in conjuncts.iter().enumerate() {
            if let Some((vi, repl)) = defining_equality_at(c, &vars) {
                let (v, _) = vars.remove(vi);
                let rest: Vec<Formula> = conjuncts
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != ci)
                    .map(|(_, f)| f.clone())
                    .collect();
                let rest = if rest.is_empty() { tt() } else { and_of(rest) };
                body = rest
                    .substitute(&v, &Subst::Expr(repl))
                    .expect("defining equality has matching sort");
                progressed = true;
                break;
            }
        }
        if !progressed {
            return Formula::exists(vars, body);
        }
    }
}

/// If `c` is `x = t` or `t = x` (or `x iff t`) for some bound `x` not free
/// in `t`, returns the binder index and `t`.
fn defining_equality_at(c: &Formula, vars: &[(String, Sort)]) -> Option<(usize, Formula)> {
    let as_def = |a: &Formula, b: &Formula| -> Option<(usize, Formula)> {
        let Formula::Var(name, _) = a else {
            return None;
        };
        let vi = vars.iter().position(|(v, _)| v == name)?;
        if b.free_vars().iter().any(|(n, _)| n == name) {
            return None;
        }
        Some((vi, b.clone()))
    };
    match c {
        Formula::Cmp(crate::formula::CmpOp::Eq, a, b) => as_def(a, b).or_else(|| as_def(b, a)),
        Formula::Iff(a, b) => as_def(a, b).or_else(|| as_def(b, a)),
        _ => None,
    }
}

/// Names already used in a formula, for callers picking standalone fresh
/// names.
pub fn taken_names(f: &Formula) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    for (n, _) in f.free_vars() {
        names.insert(n);
    }
    names
}

pub fn fresh_like(base: &str, f: &Formula) -> String {
    fresh_name(base, &taken_names(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::CmpOp;
    use crate::frontend::parse_problem;
    use crate::semantics::{Fix, Problem};

    fn loop_problem() -> Problem {
        parse_problem(include_str!("../../../fixtures/loop.sem"), "loop.sem")
            .expect("loop.sem parses")
            .problem
    }

    fn max2_problem() -> Problem {
        parse_problem(include_str!("../../../fixtures/max2.sem"), "max2.sem")
            .expect("max2.sem parses")
            .problem
    }

    pub(crate) fn term_of(problem: &Problem, text: &str) -> Term {
        fn go(g: &crate::term::Grammar, s: &crate::frontend::sexp::Sexp) -> Term {
            use crate::frontend::sexp::Sexp;
            match s {
                Sexp::Atom(a, _) => {
                    Term::leaf(g.symbol(a).unwrap_or_else(|| panic!("symbol {a}")).clone())
                }
                Sexp::List(items, _) => {
                    let sym = g.symbol(items[0].as_atom().unwrap()).unwrap().clone();
                    let children = items[1..].iter().map(|c| go(g, c)).collect();
                    Term::new(sym, children).unwrap()
                }
            }
        }
        let forms = crate::frontend::sexp::read_all(text).unwrap();
        go(&problem.grammar, &forms[0])
    }

    fn var(n: &str) -> Formula {
        Formula::var(n, Sort::Int)
    }

    #[test]
    fn phi_of_leaf_rule_is_the_instantiated_body() {
        // Sem_E(0, x, y, r) expands to r = 0 with actual arguments in place.
        let p = max2_problem();
        let zero = term_of(&p, "0");
        let app = Formula::rel(
            RelName::plain("Sem_E"),
            TermExpr::Const(zero),
            vec![var("a"), var("b"), var("r")],
        );
        let mut fresh = FreshCounter::new();
        let got = phi_of(&p.semantics, &app, &mut fresh).unwrap();
        assert_eq!(got, Formula::eq(var("r"), Formula::int(0)));
    }

    #[test]
    fn phi_of_assignment_substitutes_state() {
        // Sem_S(x:= y, 3, 7, xp, yp) -> Sem_E(y, 3, 7, xp) ∧ 7 = yp
        let p = max2_problem();
        let t = term_of(&p, "(x:= y)");
        let app = Formula::rel(
            RelName::plain("Sem_S"),
            TermExpr::Const(t),
            vec![Formula::int(3), Formula::int(7), var("xp"), var("yp")],
        );
        let mut fresh = FreshCounter::new();
        let got = phi_of(&p.semantics, &app, &mut fresh).unwrap();
        let y_leaf = term_of(&p, "y");
        let expect = Formula::And(vec![
            Formula::rel(
                RelName::plain("Sem_E"),
                TermExpr::Const(y_leaf),
                vec![Formula::int(3), Formula::int(7), var("xp")],
            ),
            Formula::eq(Formula::int(7), var("yp")),
        ]);
        assert_eq!(got, expect);
    }

    #[test]
    fn phi_of_comparison_rule() {
        // Sem_B(0<x, x, y, b) -> b ⇔ 0 < x  (for actual args)
        let p = loop_problem();
        let t = term_of(&p, "0<x");
        let app = Formula::rel(
            RelName::plain("Sem_B"),
            TermExpr::Const(t),
            vec![var("x"), var("y"), Formula::var("b", Sort::Bool)],
        );
        let mut fresh = FreshCounter::new();
        let got = phi_of(&p.semantics, &app, &mut fresh).unwrap();
        let expect = Formula::iff(
            Formula::var("b", Sort::Bool),
            Formula::cmp(CmpOp::Lt, Formula::int(0), var("x")),
        );
        assert_eq!(got, expect);
    }

    #[test]
    fn phi_of_rejects_symbolic_terms() {
        let p = max2_problem();
        let app = Formula::rel(
            RelName::plain("Sem_S"),
            TermExpr::Var("f".into(), "S".into()),
            vec![var("a"), var("b"), var("c"), var("d")],
        );
        let mut fresh = FreshCounter::new();
        assert!(matches!(
            phi_of(&p.semantics, &app, &mut fresh),
            Err(TransformError::SymbolicTerm(_))
        ));
    }

    #[test]
    fn rule_of_decrement_body_matches_declared_form() {
        // body: xp = x - 1 ∧ y = yp
        let p = loop_problem();
        let rule = p.semantics.rule_of("Sem_S", "x--").unwrap();
        let expect = Formula::And(vec![
            Formula::eq(
                var("xp"),
                Formula::Sub(Box::new(var("x")), Box::new(Formula::int(1))),
            ),
            Formula::eq(var("y"), var("yp")),
        ]);
        assert_eq!(rule.body, expect);
    }

    #[test]
    fn rule_of_unknown_pair_is_an_error() {
        let p = loop_problem();
        assert!(p.semantics.rule_of("Sem_B", "while").is_err());
        assert!(p.semantics.rule_of("nosuch", "0<x").is_err());
    }

    #[test]
    fn norm_replaces_negated_relations_with_complements() {
        let app = Formula::rel(
            RelName::plain("Sem_L"),
            TermExpr::Var("t".into(), "L".into()),
            vec![var("x")],
        );
        let got = norm(&Formula::not(app.clone()));
        match got {
            Formula::RelApp { rel, .. } => {
                assert_eq!(rel.base, "Sem_L");
                assert!(rel.complement);
            }
            other => panic!("expected a complement application, got {other:?}"),
        }
        // Sem_L(..) ⇒ Sem_L(..) normalizes to Sem_L~(..) ∨ Sem_L(..)
        let imp = Formula::implies(app.clone(), app.clone());
        let got = norm(&imp);
        match &got {
            Formula::Or(parts) => {
                assert_eq!(parts.len(), 2);
                assert!(only_positive_rels(&got));
            }
            other => panic!("expected a disjunction, got {other:?}"),
        }
    }

    #[test]
    fn dual_equation_is_an_involution() {
        let eq = FixpointEquation {
            name: "X".into(),
            fix: Fix::Mu,
            params: vec![("x".into(), Sort::Int)],
            body: Formula::Or(vec![
                Formula::RelApp {
                    rel: RelName::plain("X"),
                    term: None,
                    args: vec![var("x")],
                },
                Formula::cmp(CmpOp::Lt, var("x"), Formula::int(0)),
            ]),
        };
        let dd = dual_equation(&dual_equation(&eq));
        assert_eq!(dd.name, eq.name);
        assert_eq!(dd.fix, eq.fix);
        assert_eq!(dd.body, norm(&eq.body));
    }

    #[test]
    fn dual_of_false_is_true() {
        let eq = FixpointEquation {
            name: "X".into(),
            fix: Fix::Mu,
            params: vec![],
            body: ff(),
        };
        let d = dual_equation(&eq);
        assert_eq!(d.fix, Fix::Nu);
        assert_eq!(d.name, "X~");
        assert_eq!(d.body, tt());
    }

    #[test]
    fn dual_of_seq_rule_matches_demorgan_form() {
        // Sem_S(seq..) =mu ∃x2,y2. S(s,..) ∧ S(t,..) dualizes to
        // Sem_S~(seq..) =nu ∀x2,y2. S~(s,..) ∨ S~(t,..)
        let p = loop_problem();
        let t = term_of(&p, "(seq x-- y++)");
        let body = body_for_term(&p.semantics, "Sem_S", &t).unwrap();
        let eq = FixpointEquation {
            name: "Sem_S".into(),
            fix: Fix::Mu,
            params: p.semantics.relation("Sem_S").unwrap().params(),
            body,
        };
        let d = dual_equation(&eq);
        assert_eq!(d.fix, Fix::Nu);
        match &d.body {
            Formula::Quant(Quantifier::Forall, vars, inner) => {
                assert_eq!(vars.len(), 2);
                match &**inner {
                    Formula::Or(parts) => {
                        assert_eq!(parts.len(), 2);
                        for part in parts {
                            match part {
                                Formula::RelApp { rel, .. } => assert!(rel.complement),
                                other => panic!("expected complement app, got {other:?}"),
                            }
                        }
                    }
                    other => panic!("expected a disjunction, got {other:?}"),
                }
            }
            other => panic!("expected a universal, got {other:?}"),
        }
    }

    #[test]
    fn dnf_distributes_and_over_or() {
        let a = Formula::eq(var("a"), Formula::int(0));
        let b = Formula::eq(var("b"), Formula::int(0));
        let c = Formula::eq(var("c"), Formula::int(0));
        let f = Formula::And(vec![Formula::Or(vec![a.clone(), b.clone()]), c.clone()]);
        let mut fresh = FreshCounter::new();
        let cubes = dnf_cubes(&f, &mut fresh).unwrap();
        assert_eq!(cubes.len(), 2);
        assert_eq!(cubes[0], Formula::And(vec![a, c.clone()]));
        assert_eq!(cubes[1], Formula::And(vec![b, c]));
    }

    #[test]
    fn dnf_erases_existentials_with_fresh_names() {
        let f = Formula::exists(
            vec![("z".into(), Sort::Int)],
            Formula::And(vec![
                Formula::rel(
                    RelName::plain("R"),
                    TermExpr::Var("t".into(), "S".into()),
                    vec![var("z")],
                ),
                Formula::cmp(CmpOp::Lt, var("z"), Formula::int(3)),
            ]),
        );
        let mut fresh = FreshCounter::new();
        let cubes = dnf_cubes(&f, &mut fresh).unwrap();
        assert_eq!(cubes.len(), 1);
        let fv = cubes[0].free_vars();
        assert!(fv.iter().any(|(n, _)| n == "z!1"));
        assert!(!fv.iter().any(|(n, _)| n == "z"));
    }

    #[test]
    fn dnf_rejects_universal_quantifiers() {
        let f = Formula::forall(
            vec![("z".into(), Sort::Int)],
            Formula::cmp(CmpOp::Lt, var("z"), var("x")),
        );
        let mut fresh = FreshCounter::new();
        assert!(matches!(
            dnf_cubes(&f, &mut fresh),
            Err(TransformError::UniversalQuantifier)
        ));
    }

    #[test]
    fn rules_of_ite_yields_two_clauses() {
        let p = max2_problem();
        let t = term_of(&p, "(Ite (< x y) (x:= y) (x:= x))");
        let mut fresh = FreshCounter::new();
        let clauses = rules_of(&p.semantics, "Sem_S", &t, &mut fresh).unwrap();
        assert_eq!(clauses.len(), 2);
    }

    #[test]
    fn rules_of_leaf_yields_one_clause() {
        let p = max2_problem();
        let t = term_of(&p, "0");
        let mut fresh = FreshCounter::new();
        let clauses = rules_of(&p.semantics, "Sem_E", &t, &mut fresh).unwrap();
        assert_eq!(clauses.len(), 1);
        assert_eq!(clauses[0].body, Formula::eq(var("r"), Formula::int(0)));
    }

    #[test]
    fn reify_seq_produces_three_shared_relations() {
        // seq(x--, y++): one relation per distinct subterm of the program.
        let p = loop_problem();
        let t = term_of(&p, "(seq x-- y++)");
        let set = reify(&p.semantics, "Sem_S", &t).unwrap();
        assert_eq!(set.rules.len(), 3);
        assert!(set.is_closed());
        assert_eq!(set.root, "Sem_S#0");
        let leaf = set.rule("Sem_S#1").expect("x-- relation");
        let expect = Formula::And(vec![
            Formula::eq(
                var("xp"),
                Formula::Sub(Box::new(var("x")), Box::new(Formula::int(1))),
            ),
            Formula::eq(var("y"), var("yp")),
        ]);
        assert_eq!(leaf.body, expect);
    }

    #[test]
    fn reify_shares_structurally_equal_subterms() {
        let p = loop_problem();
        let t = term_of(&p, "(seq y++ y++)");
        let set = reify(&p.semantics, "Sem_S", &t).unwrap();
        assert_eq!(set.rules.len(), 2);
    }

    #[test]
    fn reify_of_recursive_loop_is_finite() {
        let p = loop_problem();
        let t = term_of(&p, "(while 0<x (seq x-- (seq y++ y++)))");
        let set = reify(&p.semantics, "Sem_L", &t).unwrap();
        assert!(set.is_closed());
        let bound = p.semantics.relations.len() * t.distinct_subterms().len();
        assert!(set.rules.len() <= bound);
    }

    #[test]
    fn inline_folds_straight_line_code_into_one_rule() {
        let p = loop_problem();
        let t = term_of(&p, "(seq x-- y++)");
        let set = reify(&p.semantics, "Sem_S", &t).unwrap();
        let mut fresh = FreshCounter::new();
        let inlined = inline(&set, &mut fresh);
        assert_eq!(inlined.rules.len(), 1);
        assert_eq!(inlined.rules[0].name, "Sem_S#0");
        // After quantifier elimination the body is xp = x - 1 ∧ yp = y + 1.
        let qe = eliminate_quantifiers(&inlined.rules[0].body);
        let expect = Formula::And(vec![
            Formula::eq(
                var("xp"),
                Formula::Sub(Box::new(var("x")), Box::new(Formula::int(1))),
            ),
            Formula::eq(
                var("yp"),
                Formula::Add(Box::new(var("y")), Box::new(Formula::int(1))),
            ),
        ]);
        assert!(qe.alpha_eq(&expect), "expected {expect:?}\n     got {qe:?}");
    }

    #[test]
    fn inline_keeps_self_recursive_rules() {
        let p = loop_problem();
        let t = term_of(&p, "(while 0<x (seq x-- y++))");
        let set = reify(&p.semantics, "Sem_L", &t).unwrap();
        let mut fresh = FreshCounter::new();
        let inlined = inline(&set, &mut fresh);
        let root = inlined.rule(&inlined.root).expect("root survives");
        let mut self_ref = false;
        root.body.for_each_rel_app(&mut |rel, _, _| {
            if rel.base == inlined.root {
                self_ref = true;
            }
        });
        assert!(self_ref);
        // Everything else was straight-line and folds away.
        assert_eq!(inlined.rules.len(), 1);
    }

    #[test]
    fn inline_without_references_is_identity() {
        let items = vec![(
            "X".to_string(),
            vec![("x".to_string(), Sort::Int)],
            Formula::eq(var("x"), Formula::int(0)),
        )];
        let mut protect = BTreeSet::new();
        protect.insert("X".to_string());
        let mut fresh = FreshCounter::new();
        let out = inline_defs(items.clone(), &protect, &mut fresh);
        assert_eq!(out, items);
    }

    #[test]
    fn qe_one_point_rule() {
        // ∃x2,y2. x2 = x-1 ∧ y2 = y ∧ xp = x2 ∧ yp = y2+1 → xp = x-1 ∧ yp = y+1
        let body = Formula::exists(
            vec![("x2".into(), Sort::Int), ("y2".into(), Sort::Int)],
            Formula::And(vec![
                Formula::eq(
                    var("x2"),
                    Formula::Sub(Box::new(var("x")), Box::new(Formula::int(1))),
                ),
                Formula::eq(var("y2"), var("y")),
                Formula::eq(var("xp"), var("x2")),
                Formula::eq(
                    var("yp"),
                    Formula::Add(Box::new(var("y2")), Box::new(Formula::int(1))),
                ),
            ]),
        );
        let got = eliminate_quantifiers(&body);
        let expect = Formula::And(vec![
            Formula::eq(
                var("xp"),
                Formula::Sub(Box::new(var("x")), Box::new(Formula::int(1))),
            ),
            Formula::eq(
                var("yp"),
                Formula::Add(Box::new(var("y")), Box::new(Formula::int(1))),
            ),
        ]);
        assert_eq!(got, expect);
    }

    #[test]
    fn qe_leaves_non_defining_bodies_alone() {
        let body = Formula::exists(
            vec![("z".into(), Sort::Int)],
            Formula::And(vec![
                Formula::cmp(CmpOp::Gt, var("z"), Formula::int(0)),
                Formula::cmp(CmpOp::Gt, var("z"), Formula::int(1)),
            ]),
        );
        assert_eq!(eliminate_quantifiers(&body), body);
    }

    #[test]
    fn qe_drops_unused_binders() {
        let body = Formula::forall(
            vec![("z".into(), Sort::Int)],
            Formula::cmp(CmpOp::Lt, var("x"), var("y")),
        );
        assert_eq!(
            eliminate_quantifiers(&body),
            Formula::cmp(CmpOp::Lt, var("x"), var("y"))
        );
    }

    #[test]
    fn qe_handles_universal_disequality() {
        // ∀z. z ≠ x+1 ∨ P-ish(z)  →  P-ish(x+1); with a comparison payload.
        let body = Formula::forall(
            vec![("z".into(), Sort::Int)],
            Formula::Or(vec![
                Formula::cmp(
                    CmpOp::Ne,
                    var("z"),
                    Formula::Add(Box::new(var("x")), Box::new(Formula::int(1))),
                ),
                Formula::cmp(CmpOp::Lt, var("z"), var("y")),
            ]),
        );
        let got = eliminate_quantifiers(&body);
        let expect = Formula::cmp(
            CmpOp::Lt,
            Formula::Add(Box::new(var("x")), Box::new(Formula::int(1))),
            var("y"),
        );
        assert_eq!(got, expect);
    }
}
