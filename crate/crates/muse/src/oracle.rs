//! Exact finite-domain evaluation of fixed-point equation systems.
//!
//! Integer variables range over a bounded interval; relations are tuple sets
//! computed by Kleene iteration. A system of ordered equations is evaluated
//! by nesting: the first equation is outermost, and for each of its iterates
//! the remaining suffix is solved completely. Over a finite domain this is
//! exact, which makes the oracle the reference point for every encoder and
//! optimization in the crate.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::analysis;
use crate::encode::{self, DualOrder};
use crate::formula::{Formula, Quantifier, Sort, TermExpr};
use crate::semantics::{Fix, FixpointEquation, Problem, Solution, Verdict};
use crate::term::Term;

/// What happens when interpreted arithmetic leaves the interval: under
/// `Stuck`, a relation atom whose argument falls outside the domain is false
/// (the tuple does not exist); under `Clamp`, every arithmetic result is
/// clamped into the interval (positions hit a wall). Comparisons between
/// integers are always evaluated exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Policy {
    #[default]
    Stuck,
    Clamp,
}

/// An inclusive integer interval with an out-of-range policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiniteDomain {
    pub lo: i64,
    pub hi: i64,
    pub policy: Policy,
    pub cap: usize,
}

pub const DEFAULT_DOMAIN_CAP: usize = 64;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("empty domain: {lo}..{hi}")]
    EmptyDomain { lo: i64, hi: i64 },
    #[error("domain has {size} values, over the cap of {cap}; use a smaller interval")]
    DomainTooLarge { size: usize, cap: usize },
    #[error("relation {0} has a term-sorted parameter; evaluate a reified system")]
    TermParam(String),
    #[error("equation for {0} mentions undefined relation {1}")]
    UndefinedRelation(String, String),
    #[error("equation for {0} has a negative occurrence of {1}")]
    NegativeOccurrence(String, String),
    #[error("iteration for {0} was not monotone; the system is malformed")]
    NotMonotone(String),
    #[error("tuple space of {rel} has {size} entries; use a smaller interval")]
    TupleSpaceTooLarge { rel: String, size: usize },
    #[error("the rules of {0} are not CHC-like; bounded derivation does not apply")]
    NotChcLike(String),
    #[error(transparent)]
    Encode(#[from] Box<crate::encode::EncodeError>),
}

impl FiniteDomain {
    pub fn new(lo: i64, hi: i64) -> Result<FiniteDomain, OracleError> {
        FiniteDomain::with_policy(lo, hi, Policy::Stuck)
    }

    pub fn with_policy(lo: i64, hi: i64, policy: Policy) -> Result<FiniteDomain, OracleError> {
        if lo > hi {
            return Err(OracleError::EmptyDomain { lo, hi });
        }
        let d = FiniteDomain {
            lo,
            hi,
            policy,
            cap: DEFAULT_DOMAIN_CAP,
        };
        if d.size() > d.cap {
            return Err(OracleError::DomainTooLarge {
                size: d.size(),
                cap: d.cap,
            });
        }
        Ok(d)
    }

    pub fn size(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn values(&self) -> impl Iterator<Item = i64> + '_ {
        self.lo..=self.hi
    }

    fn adjust(&self, v: i64) -> i64 {
        match self.policy {
            Policy::Stuck => v,
            Policy::Clamp => v.clamp(self.lo, self.hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

pub type Tuple = Vec<Value>;
pub type TupleSet = BTreeSet<Tuple>;

/// Per-relation satisfying tuple sets over the finite domain.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Interpretation {
    pub relations: BTreeMap<String, TupleSet>,
}

impl Interpretation {
    pub fn holds(&self, rel: &str, tuple: &[Value]) -> bool {
        self.relations
            .get(rel)
            .map(|s| s.contains(tuple))
            .unwrap_or(false)
    }
}

type Env = Vec<(String, Value)>;

fn lookup(env: &Env, name: &str) -> Option<Value> {
    env.iter().rev().find(|(n, _)| n == name).map(|(_, v)| *v)
}

fn eval_int(f: &Formula, env: &Env, dom: &FiniteDomain) -> Option<i64> {
    let v = match f {
        Formula::IntConst(n) => *n,
        Formula::Var(name, _) => match lookup(env, name)? {
            Value::Int(n) => n,
            Value::Bool(_) => return None,
        },
        Formula::Add(a, b) => eval_int(a, env, dom)?.checked_add(eval_int(b, env, dom)?)?,
        Formula::Sub(a, b) => eval_int(a, env, dom)?.checked_sub(eval_int(b, env, dom)?)?,
        Formula::Mul(c, a) => c.checked_mul(eval_int(a, env, dom)?)?,
        _ => return None,
    };
    Some(dom.adjust(v))
}

fn eval_bool(f: &Formula, env: &mut Env, interp: &Interpretation, dom: &FiniteDomain) -> bool {
    match f {
        Formula::BoolConst(b) => *b,
        Formula::Var(name, _) => matches!(lookup(env, name), Some(Value::Bool(true))),
        Formula::Cmp(op, a, b) => match (eval_int(a, env, dom), eval_int(b, env, dom)) {
            (Some(x), Some(y)) => op.eval(x, y),
            _ => false,
        },
        Formula::Not(a) => !eval_bool(a, env, interp, dom),
        Formula::And(fs) => fs.iter().all(|x| eval_bool(x, env, interp, dom)),
        Formula::Or(fs) => fs.iter().any(|x| eval_bool(x, env, interp, dom)),
        Formula::Implies(a, b) => {
            !eval_bool(a, env, interp, dom) || eval_bool(b, env, interp, dom)
        }
        Formula::Iff(a, b) => eval_bool(a, env, interp, dom) == eval_bool(b, env, interp, dom),
        Formula::Quant(q, vars, body) => eval_quant(*q, vars, body, env, interp, dom),
        Formula::RelApp { rel, args, .. } => {
            let mut tuple = Vec::with_capacity(args.len());
            for a in args {
                match a.sort() {
                    Sort::Int => match eval_int(a, env, dom) {
                        // Tuples only exist over the domain.
                        Some(v) if dom.contains(v) => tuple.push(Value::Int(v)),
                        _ => return false,
                    },
                    Sort::Bool => tuple.push(Value::Bool(eval_bool(a, env, interp, dom))),
                    Sort::TermSort(_) => return false,
                }
            }
            interp.holds(&rel.to_string(), &tuple)
        }
        Formula::IntConst(_) | Formula::Add(..) | Formula::Sub(..) | Formula::Mul(..) => {
            unreachable!("integer expression in boolean position")
        }
    }
}

fn eval_quant(
    q: Quantifier,
    vars: &[(String, Sort)],
    body: &Formula,
    env: &mut Env,
    interp: &Interpretation,
    dom: &FiniteDomain,
) -> bool {
    fn go(
        q: Quantifier,
        vars: &[(String, Sort)],
        body: &Formula,
        env: &mut Env,
        interp: &Interpretation,
        dom: &FiniteDomain,
    ) -> bool {
        let Some((v, sort)) = vars.first() else {
            return eval_bool(body, env, interp, dom);
        };
        let rest = &vars[1..];
        let candidates: Vec<Value> = match sort {
            Sort::Int => dom.values().map(Value::Int).collect(),
            Sort::Bool => vec![Value::Bool(false), Value::Bool(true)],
            Sort::TermSort(_) => return false,
        };
        match q {
            Quantifier::Forall => candidates.into_iter().all(|c| {
                env.push((v.clone(), c));
                let r = go(q, rest, body, env, interp, dom);
                env.pop();
                r
            }),
            Quantifier::Exists => candidates.into_iter().any(|c| {
                env.push((v.clone(), c));
                let r = go(q, rest, body, env, interp, dom);
                env.pop();
                r
            }),
        }
    }
    go(q, vars, body, env, interp, dom)
}

/// Evaluates a closed formula (no free first-order variables) against an
/// interpretation.
pub fn eval_closed(f: &Formula, interp: &Interpretation, dom: &FiniteDomain) -> bool {
    eval_bool(f, &mut Vec::new(), interp, dom)
}

const MAX_TUPLE_SPACE: usize = 1 << 22;

fn tuple_space(
    name: &str,
    params: &[(String, Sort)],
    dom: &FiniteDomain,
) -> Result<Vec<Tuple>, OracleError> {
    let mut size: usize = 1;
    for (_, s) in params {
        let k = match s {
            Sort::Int => dom.size(),
            Sort::Bool => 2,
            Sort::TermSort(_) => return Err(OracleError::TermParam(name.to_string())),
        };
        size = size
            .checked_mul(k)
            .filter(|&s| s <= MAX_TUPLE_SPACE)
            .ok_or(OracleError::TupleSpaceTooLarge {
                rel: name.to_string(),
                size: usize::MAX,
            })?;
    }
    let mut out: Vec<Tuple> = vec![Vec::new()];
    for (_, s) in params {
        let candidates: Vec<Value> = match s {
            Sort::Int => dom.values().map(Value::Int).collect(),
            Sort::Bool => vec![Value::Bool(false), Value::Bool(true)],
            Sort::TermSort(_) => unreachable!(),
        };
        let mut next = Vec::with_capacity(out.len() * candidates.len());
        for prefix in &out {
            for c in &candidates {
                let mut t = prefix.clone();
                t.push(*c);
                next.push(t);
            }
        }
        out = next;
    }
    Ok(out)
}

fn validate_system(equations: &[FixpointEquation]) -> Result<(), OracleError> {
    let heads: BTreeSet<&str> = equations.iter().map(|e| e.name.as_str()).collect();
    for eq in equations {
        for (_, s) in &eq.params {
            if matches!(s, Sort::TermSort(_)) {
                return Err(OracleError::TermParam(eq.name.clone()));
            }
        }
        let pols = analysis::spec_polarity(&eq.body);
        for (rel, pol) in &pols {
            if !heads.contains(rel.as_str()) {
                return Err(OracleError::UndefinedRelation(eq.name.clone(), rel.clone()));
            }
            if !matches!(pol, analysis::Polarity::Positive | analysis::Polarity::Absent) {
                return Err(OracleError::NegativeOccurrence(eq.name.clone(), rel.clone()));
            }
        }
        let mut term_arg = false;
        eq.body.for_each_rel_app(&mut |_, te, _| {
            if te.is_some() {
                term_arg = true;
            }
        });
        if term_arg {
            return Err(OracleError::TermParam(eq.name.clone()));
        }
    }
    Ok(())
}

/// Computes the nested fixed point of an ordered equation system: the first
/// equation is outermost; for each of its Kleene iterates (from the empty
/// set for `mu`, from the full tuple space for `nu`) the remaining suffix is
/// solved completely. Successive iterates are checked for monotonicity.
pub fn eval_system(
    equations: &[FixpointEquation],
    dom: &FiniteDomain,
) -> Result<Interpretation, OracleError> {
    validate_system(equations)?;
    let spaces: Vec<Vec<Tuple>> = equations
        .iter()
        .map(|eq| tuple_space(&eq.name, &eq.params, dom))
        .collect::<Result<_, _>>()?;

    // Names defined before index i that the suffix starting at i reads; the
    // suffix solution is memoized on their current values.
    let names: Vec<&str> = equations.iter().map(|e| e.name.as_str()).collect();
    let mut outer_refs: Vec<Vec<String>> = vec![Vec::new(); equations.len() + 1];
    for i in 0..equations.len() {
        let mut refs = BTreeSet::new();
        for eq in &equations[i..] {
            eq.body.for_each_rel_app(&mut |rel, _, _| {
                let n = rel.to_string();
                if names[..i].contains(&n.as_str()) {
                    refs.insert(n.clone());
                }
            });
        }
        outer_refs[i] = refs.into_iter().collect();
    }

    type Memo = HashMap<(usize, Vec<(String, TupleSet)>), BTreeMap<String, TupleSet>>;

    fn solve(
        i: usize,
        equations: &[FixpointEquation],
        spaces: &[Vec<Tuple>],
        outer_refs: &[Vec<String>],
        outer: &BTreeMap<String, TupleSet>,
        dom: &FiniteDomain,
        memo: &mut Memo,
    ) -> Result<BTreeMap<String, TupleSet>, OracleError> {
        if i == equations.len() {
            return Ok(BTreeMap::new());
        }
        let key: Vec<(String, TupleSet)> = outer_refs[i]
            .iter()
            .map(|n| (n.clone(), outer.get(n).cloned().unwrap_or_default()))
            .collect();
        if let Some(hit) = memo.get(&(i, key.clone())) {
            return Ok(hit.clone());
        }
        let eq = &equations[i];
        let mut current: TupleSet = match eq.fix {
            Fix::Mu => TupleSet::new(),
            Fix::Nu => spaces[i].iter().cloned().collect(),
        };
        let result = loop {
            let mut visible = outer.clone();
            visible.insert(eq.name.clone(), current.clone());
            let suffix = solve(i + 1, equations, spaces, outer_refs, &visible, dom, memo)?;
            let mut interp = Interpretation::default();
            interp.relations = visible.clone();
            interp.relations.extend(suffix.clone());
            let mut next = TupleSet::new();
            for tuple in &spaces[i] {
                let mut env: Env = eq
                    .params
                    .iter()
                    .zip(tuple)
                    .map(|((n, _), v)| (n.clone(), *v))
                    .collect();
                if eval_bool(&eq.body, &mut env, &interp, dom) {
                    next.insert(tuple.clone());
                }
            }
            let monotone = match eq.fix {
                Fix::Mu => current.is_subset(&next),
                Fix::Nu => next.is_subset(&current),
            };
            if !monotone {
                return Err(OracleError::NotMonotone(eq.name.clone()));
            }
            if next == current {
                let mut out = suffix;
                out.insert(eq.name.clone(), current);
                break out;
            }
            current = next;
        };
        memo.insert((i, key), result.clone());
        Ok(result)
    }

    let relations = solve(
        0,
        equations,
        &spaces,
        &outer_refs,
        &BTreeMap::new(),
        dom,
        &mut Memo::new(),
    )?;
    Ok(Interpretation { relations })
}

/// Everything the oracle computed for one query, for callers that want to
/// inspect the interpretation.
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub verdict: Verdict,
    pub interpretation: Interpretation,
    pub equations: Vec<FixpointEquation>,
    pub goal: Formula,
}

/// Decides a (problem, solution) pair exactly over the finite domain: the
/// query is encoded as a reified fixed-point system, the system is solved by
/// nested Kleene iteration, and the goal is evaluated with its quantifiers
/// ranging over the domain. The verdict is exact for the bounded domain and
/// is reported as domain-bounded by callers.
pub fn oracle_verify(
    problem: &Problem,
    solution: &Solution,
    dom: &FiniteDomain,
) -> Result<Verdict, OracleError> {
    Ok(oracle_verify_full(problem, solution, dom)?.verdict)
}

pub fn oracle_verify_full(
    problem: &Problem,
    solution: &Solution,
    dom: &FiniteDomain,
) -> Result<OracleRun, OracleError> {
    let query = encode::muclp_of(problem, solution, DualOrder::default())
        .map_err(|e| OracleError::Encode(Box::new(e)))?;
    let query = encode::reify_query(&query);
    let equations: Vec<FixpointEquation> =
        query.equations.iter().map(|e| e.to_fixpoint()).collect();
    let interpretation = eval_system(&equations, dom)?;
    let holds = eval_closed(&query.goal, &interpretation, dom);
    let verdict = if holds { Verdict::Valid } else { Verdict::Invalid };
    Ok(OracleRun {
        verdict,
        interpretation,
        equations,
        goal: query.goal,
    })
}

/// Decides an encoded query against the oracle. Horn and SMT queries are
/// evaluated through their goal formulas; dual queries flip the answer.
pub fn oracle_decide_query(
    query: &encode::EncodedQuery,
    dom: &FiniteDomain,
) -> Result<Verdict, OracleError> {
    use crate::encode::QueryKind;
    match query.kind {
        QueryKind::Smt => {
            let holds = eval_closed(&query.goal, &Interpretation::default(), dom);
            Ok(if holds { Verdict::Valid } else { Verdict::Invalid })
        }
        _ => {
            let q = if query.reified {
                query.clone()
            } else {
                encode::reify_query(query)
            };
            let equations: Vec<FixpointEquation> = match q.kind {
                QueryKind::Chc => {
                    // Clauses grouped into mu-equations.
                    let mut grouped: Vec<FixpointEquation> = Vec::new();
                    for c in &q.clauses {
                        let body = crate::transform::close_cube(&c.body, &c.params);
                        if let Some(eq) = grouped.iter_mut().find(|e| e.name == c.rel) {
                            match &mut eq.body {
                                Formula::Or(fs) => fs.push(body),
                                other => {
                                    let prev = other.clone();
                                    *other = Formula::Or(vec![prev, body]);
                                }
                            }
                        } else {
                            grouped.push(FixpointEquation {
                                name: c.rel.clone(),
                                fix: Fix::Mu,
                                params: c.params.clone(),
                                body,
                            });
                        }
                    }
                    grouped
                }
                _ => q.equations.iter().map(|e| e.to_fixpoint()).collect(),
            };
            // Inlining introduces blocks of defined existentials; fold them
            // before enumerating.
            let equations: Vec<FixpointEquation> = equations
                .into_iter()
                .map(|mut e| {
                    e.body = crate::transform::eliminate_quantifiers(&e.body);
                    e
                })
                .collect();
            let interp = eval_system(&equations, dom)?;
            let goal = if q.negate_goal {
                crate::transform::norm(&Formula::not(q.goal.clone()))
            } else {
                q.goal.clone()
            };
            let holds = eval_closed(&goal, &interp, dom);
            let valid = if q.negate_goal { !holds } else { holds };
            Ok(if valid { Verdict::Valid } else { Verdict::Invalid })
        }
    }
}

// ---------------------------------------------------------------------------
// Depth-bounded derivation search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum DeriveMemo {
    Proven,
    FailedUpTo(usize),
}

/// Integer window for existential witnesses during derivation search: wide
/// enough that any value reachable within `depth` rule applications from the
/// query's arguments fits. Independent of any oracle domain.
fn derivation_window(problem: &Problem, args: &[Value], depth: usize) -> (i64, i64) {
    let mut consts: Vec<i64> = vec![0];
    for rule in problem.semantics.rules.values() {
        collect_consts(&rule.body, &mut consts);
    }
    let step = consts.iter().map(|c| c.abs()).max().unwrap_or(1).max(1);
    let arg_vals: Vec<i64> = args
        .iter()
        .filter_map(|v| match v {
            Value::Int(n) => Some(*n),
            Value::Bool(_) => None,
        })
        .collect();
    let lo = arg_vals.iter().copied().chain(consts.iter().copied()).min().unwrap_or(0);
    let hi = arg_vals.iter().copied().chain(consts.iter().copied()).max().unwrap_or(0);
    let slack = step * (depth as i64 + 1);
    (lo - slack, hi + slack)
}

fn collect_consts(f: &Formula, out: &mut Vec<i64>) {
    match f {
        Formula::IntConst(n) => out.push(*n),
        Formula::Add(a, b) | Formula::Sub(a, b) | Formula::Cmp(_, a, b) => {
            collect_consts(a, out);
            collect_consts(b, out);
        }
        Formula::Mul(c, a) => {
            out.push(*c);
            collect_consts(a, out);
        }
        Formula::Not(a) => collect_consts(a, out),
        Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|x| collect_consts(x, out)),
        Formula::Implies(a, b) | Formula::Iff(a, b) => {
            collect_consts(a, out);
            collect_consts(b, out);
        }
        Formula::Quant(_, _, body) => collect_consts(body, out),
        Formula::RelApp { args, .. } => args.iter().for_each(|x| collect_consts(x, out)),
        _ => {}
    }
}

/// Whether `rel(term, args)` has a derivation tree of height at most
/// `depth_max`. Requires the rules reachable from the application to be in
/// the Horn fragment. The search is depth-bounded and memoized; existential
/// witnesses range over a window derived from the query, not from any oracle
/// domain.
pub fn bounded_derivation(
    problem: &Problem,
    rel: &str,
    term: &Term,
    args: &[Value],
    depth_max: usize,
) -> Result<bool, OracleError> {
    let (wlo, whi) = derivation_window(problem, args, depth_max);
    let window = FiniteDomain {
        lo: wlo,
        hi: whi,
        policy: Policy::Stuck,
        cap: usize::MAX,
    };
    bounded_derivation_in(problem, rel, term, args, depth_max, &window)
}

/// [`bounded_derivation`] with an explicit witness window. With the window
/// set to an oracle domain, a derivation exists exactly when the tuple is in
/// the domain-bounded least fixed point (for sufficient depth), which makes
/// this the independent cross-check for [`eval_system`] on `mu`-only
/// systems.
pub fn bounded_derivation_in(
    problem: &Problem,
    rel: &str,
    term: &Term,
    args: &[Value],
    depth_max: usize,
    window: &FiniteDomain,
) -> Result<bool, OracleError> {
    if !analysis::chc_like_for(&problem.semantics, rel, term) {
        return Err(OracleError::NotChcLike(rel.to_string()));
    }
    let window = *window;

    // Intern subterms and relation names so memo keys are cheap.
    let term_ids: BTreeMap<&Term, u32> = term
        .distinct_subterms()
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t, i as u32))
        .collect();
    let rel_ids: BTreeMap<&str, u32> = problem
        .semantics
        .relations
        .iter()
        .enumerate()
        .map(|(i, r)| (r.name.as_str(), i as u32))
        .collect();

    struct Search<'a> {
        problem: &'a Problem,
        window: FiniteDomain,
        term_ids: BTreeMap<&'a Term, u32>,
        rel_ids: BTreeMap<&'a str, u32>,
        bodies: HashMap<(u32, u32), (Formula, Vec<(String, Sort)>)>,
        /// Outer key (relation, term); inner lookups borrow the argument
        /// slice, so probes allocate nothing.
        memo: HashMap<(u32, u32), HashMap<Tuple, DeriveMemo>>,
    }

    impl<'a> Search<'a> {
        fn body(&mut self, rel: &str, term: &Term) -> Option<(Formula, Vec<(String, Sort)>)> {
            let key = (*self.rel_ids.get(rel)?, *self.term_ids.get(term)?);
            if let Some(hit) = self.bodies.get(&key) {
                return Some(hit.clone());
            }
            let body = crate::transform::body_for_term(&self.problem.semantics, rel, term).ok()?;
            let params = self.problem.semantics.relation(rel)?.params();
            self.bodies.insert(key, (body.clone(), params.clone()));
            Some((body, params))
        }

        fn derive(&mut self, rel: &str, term: &Term, args: &[Value], depth: usize) -> bool {
            if depth == 0 {
                return false;
            }
            let (Some(&rid), Some(&tid)) = (self.rel_ids.get(rel), self.term_ids.get(term))
            else {
                return false;
            };
            match self.memo.get(&(rid, tid)).and_then(|m| m.get(args)) {
                Some(DeriveMemo::Proven) => return true,
                Some(DeriveMemo::FailedUpTo(d)) if *d >= depth => return false,
                _ => {}
            }
            let Some((body, params)) = self.body(rel, term) else {
                return false;
            };
            let mut env: Env = params
                .iter()
                .zip(args)
                .map(|((n, _), v)| (n.clone(), *v))
                .collect();
            let ok = self.eval(&body, &mut env, depth);
            self.memo.entry((rid, tid)).or_default().insert(
                args.to_vec(),
                if ok {
                    DeriveMemo::Proven
                } else {
                    DeriveMemo::FailedUpTo(depth)
                },
            );
            ok
        }

        fn eval(&mut self, f: &Formula, env: &mut Env, depth: usize) -> bool {
            match f {
                Formula::RelApp { rel, term, args } => {
                    let Some(TermExpr::Const(t)) = term else {
                        return false;
                    };
                    // Stack buffer: this probe runs once per enumerated
                    // witness combination, so it must not allocate.
                    let mut buf = [Value::Int(0); 12];
                    if args.len() > buf.len() {
                        return false;
                    }
                    for (slot, a) in buf.iter_mut().zip(args) {
                        match a.sort() {
                            Sort::Int => match eval_int(a, env, &self.window) {
                                Some(v) => *slot = Value::Int(v),
                                None => return false,
                            },
                            Sort::Bool => {
                                let v =
                                    eval_bool(a, env, &Interpretation::default(), &self.window);
                                *slot = Value::Bool(v);
                            }
                            Sort::TermSort(_) => return false,
                        }
                    }
                    let t = t.clone();
                    let base = rel.base.clone();
                    let n = args.len();
                    self.derive(&base, &t, &buf[..n], depth - 1)
                }
                Formula::And(fs) => fs.iter().all(|x| self.eval(x, env, depth)),
                Formula::Or(fs) => fs.iter().any(|x| self.eval(x, env, depth)),
                Formula::Quant(Quantifier::Exists, vars, body) => {
                    self.eval_exists(vars, body, env, depth)
                }
                // Remaining connectives are relation-free in the Horn
                // fragment.
                other => eval_bool(other, env, &Interpretation::default(), &self.window),
            }
        }

        fn eval_exists(
            &mut self,
            vars: &[(String, Sort)],
            body: &Formula,
            env: &mut Env,
            depth: usize,
        ) -> bool {
            let Some((v, sort)) = vars.first() else {
                return self.eval(body, env, depth);
            };
            let rest = &vars[1..];
            match sort {
                Sort::Int => {
                    for c in self.window.lo..=self.window.hi {
                        env.push((v.clone(), Value::Int(c)));
                        let r = self.eval_exists(rest, body, env, depth);
                        env.pop();
                        if r {
                            return true;
                        }
                    }
                    false
                }
                Sort::Bool => [false, true].into_iter().any(|c| {
                    env.push((v.clone(), Value::Bool(c)));
                    let r = self.eval_exists(rest, body, env, depth);
                    env.pop();
                    r
                }),
                Sort::TermSort(_) => false,
            }
        }
    }

    let mut search = Search {
        problem,
        window,
        term_ids,
        rel_ids,
        bodies: HashMap::new(),
        memo: HashMap::new(),
    };
    Ok(search.derive(rel, term, args, depth_max))
}
