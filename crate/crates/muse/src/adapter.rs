//! Reference backend adapters: readers for the crate's own emitted scripts,
//! decided exactly over a finite domain.
//!
//! These back the `solve-smt`, `solve-horn` and `solve-muclp` subcommands,
//! which can be configured as solver backends like any external tool. Their
//! verdicts are domain-bounded; production setups plug in real solvers
//! instead (see the solver configuration format in [`crate::solve`]).

use std::collections::BTreeMap;

use thiserror::Error;

use crate::formula::{and_of, or_of, CmpOp, Formula, Quantifier, RelName, Sort};
use crate::frontend::sexp::{read_all, Sexp};
use crate::oracle::{eval_closed, eval_system, FiniteDomain, Interpretation, OracleError};
use crate::semantics::{Fix, FixpointEquation, Verdict};
use crate::transform::close_cube;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("parse: {0}")]
    Parse(String),
    #[error("the reference adapter only handles reified scripts: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

fn perr<T>(msg: impl Into<String>) -> Result<T, AdapterError> {
    Err(AdapterError::Parse(msg.into()))
}

struct Rels {
    /// relation name -> argument sorts
    sigs: BTreeMap<String, Vec<Sort>>,
}

fn parse_sort(s: &str) -> Result<Sort, AdapterError> {
    match s {
        "Int" => Ok(Sort::Int),
        "Bool" => Ok(Sort::Bool),
        other => perr(format!("unknown sort {other}")),
    }
}

/// Parses a formula from the emitted s-expression syntax. `=` is read as
/// integer equality or boolean equivalence depending on its arguments.
fn parse_formula(
    form: &Sexp,
    env: &mut Vec<(String, Sort)>,
    rels: &Rels,
) -> Result<Formula, AdapterError> {
    match form {
        Sexp::Atom(a, _) => {
            if let Ok(n) = a.parse::<i64>() {
                return Ok(Formula::IntConst(n));
            }
            match a.as_str() {
                "true" => return Ok(Formula::BoolConst(true)),
                "false" => return Ok(Formula::BoolConst(false)),
                _ => {}
            }
            if let Some((_, sort)) = env.iter().rev().find(|(n, _)| n == a) {
                return Ok(Formula::Var(a.clone(), sort.clone()));
            }
            if rels.sigs.contains_key(a) {
                return Ok(Formula::RelApp {
                    rel: RelName::plain(a.clone()),
                    term: None,
                    args: Vec::new(),
                });
            }
            perr(format!("unknown symbol {a}"))
        }
        Sexp::List(items, _) => {
            let Some(head) = items.first().and_then(Sexp::as_atom) else {
                return perr("expected an operator");
            };
            let args = &items[1..];
            let sub = |form: &Sexp, env: &mut Vec<(String, Sort)>| parse_formula(form, env, rels);
            match head {
                "and" | "or" => {
                    let parts = args
                        .iter()
                        .map(|a| sub(a, env))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(if head == "and" {
                        and_of(parts)
                    } else {
                        or_of(parts)
                    })
                }
                "not" => Ok(Formula::not(sub(&args[0], env)?)),
                "=>" => {
                    let a = sub(&args[0], env)?;
                    let b = sub(&args[1], env)?;
                    Ok(Formula::implies(a, b))
                }
                "=" | "iff" => {
                    let a = sub(&args[0], env)?;
                    let b = sub(&args[1], env)?;
                    if a.sort() == Sort::Bool || b.sort() == Sort::Bool {
                        Ok(Formula::iff(a, b))
                    } else {
                        Ok(Formula::cmp(CmpOp::Eq, a, b))
                    }
                }
                "<" | "<=" | ">=" | ">" | "distinct" => {
                    let a = sub(&args[0], env)?;
                    let b = sub(&args[1], env)?;
                    let op = match head {
                        "<" => CmpOp::Lt,
                        "<=" => CmpOp::Le,
                        ">=" => CmpOp::Ge,
                        ">" => CmpOp::Gt,
                        _ => CmpOp::Ne,
                    };
                    Ok(Formula::Cmp(op, Box::new(a), Box::new(b)))
                }
                "+" => {
                    let mut acc = sub(&args[0], env)?;
                    for a in &args[1..] {
                        acc = Formula::Add(Box::new(acc), Box::new(sub(a, env)?));
                    }
                    Ok(acc)
                }
                "-" => match args {
                    [a] => Ok(Formula::Sub(
                        Box::new(Formula::IntConst(0)),
                        Box::new(sub(a, env)?),
                    )),
                    [a, b] => Ok(Formula::Sub(Box::new(sub(a, env)?), Box::new(sub(b, env)?))),
                    _ => perr("(- ...) arity"),
                },
                "*" => {
                    let a = sub(&args[0], env)?;
                    let b = sub(&args[1], env)?;
                    match (&a, &b) {
                        (Formula::IntConst(c), _) => Ok(Formula::Mul(*c, Box::new(b))),
                        (_, Formula::IntConst(c)) => Ok(Formula::Mul(*c, Box::new(a))),
                        _ => perr("nonlinear multiplication"),
                    }
                }
                "forall" | "exists" => {
                    let Some(binders) = args.first().and_then(Sexp::as_list) else {
                        return perr("binder list");
                    };
                    let mut vars = Vec::new();
                    for b in binders {
                        match b.as_list() {
                            Some([Sexp::Atom(n, _), Sexp::Atom(s, _)]) => {
                                vars.push((n.clone(), parse_sort(s)?))
                            }
                            _ => return perr("binder"),
                        }
                    }
                    let depth = env.len();
                    env.extend(vars.iter().cloned());
                    let body = sub(&args[1], env)?;
                    env.truncate(depth);
                    let q = if head == "forall" {
                        Quantifier::Forall
                    } else {
                        Quantifier::Exists
                    };
                    Ok(Formula::Quant(q, vars, Box::new(body)))
                }
                name if rels.sigs.contains_key(name) => {
                    let parsed = args
                        .iter()
                        .map(|a| sub(a, env))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(Formula::RelApp {
                        rel: RelName::plain(name.to_string()),
                        term: None,
                        args: parsed,
                    })
                }
                other => perr(format!("unknown operator {other}")),
            }
        }
    }
}

/// Decides an emitted quantified-LIA script over a finite domain. Returns
/// the solver-convention answer: `unsat` when the asserted negation is
/// unsatisfiable over the domain, i.e. the goal holds.
pub fn solve_smt_script(text: &str, dom: &FiniteDomain) -> Result<Verdict, AdapterError> {
    let forms = read_all(text).map_err(|e| AdapterError::Parse(e.message))?;
    let rels = Rels {
        sigs: BTreeMap::new(),
    };
    let mut goal = None;
    for form in &forms {
        let Some(items) = form.as_list() else { continue };
        match items.first().and_then(Sexp::as_atom) {
            Some("assert") => {
                // Shape: (assert (not GOAL))
                let inner = items.get(1).and_then(Sexp::as_list);
                match inner {
                    Some([neg, g]) if neg.as_atom() == Some("not") => {
                        goal = Some(parse_formula(g, &mut Vec::new(), &rels)?);
                    }
                    _ => return perr("expected (assert (not GOAL))"),
                }
            }
            Some("declare-datatypes") | Some("declare-fun") => {
                return Err(AdapterError::Unsupported(
                    "uninterpreted declarations in an SMT script".to_string(),
                ))
            }
            _ => {}
        }
    }
    let Some(goal) = goal else {
        return perr("no assertion found");
    };
    let holds = eval_closed(&goal, &Interpretation::default(), dom);
    Ok(if holds { Verdict::Valid } else { Verdict::Invalid })
}

/// Decides an emitted Horn script over a finite domain: clauses are grouped
/// into least fixed-point equations, and the `false`-headed query clauses
/// are checked against the least solution. Returns `Valid` for `sat` (the
/// query holds) and `Invalid` for `unsat`.
pub fn solve_horn_script(text: &str, dom: &FiniteDomain) -> Result<Verdict, AdapterError> {
    let forms = read_all(text).map_err(|e| AdapterError::Parse(e.message))?;
    let mut rels = Rels {
        sigs: BTreeMap::new(),
    };
    // Declarations first.
    for form in &forms {
        let Some(items) = form.as_list() else { continue };
        match items.first().and_then(Sexp::as_atom) {
            Some("declare-datatypes") => {
                return Err(AdapterError::Unsupported(
                    "algebraic data types (run the pipeline with reification)".to_string(),
                ))
            }
            Some("declare-fun") => {
                let [_, Sexp::Atom(name, _), args, _ret] = items else {
                    return perr("declare-fun shape");
                };
                let sorts = args
                    .as_list()
                    .ok_or_else(|| AdapterError::Parse("declare-fun args".into()))?
                    .iter()
                    .map(|s| parse_sort(s.as_atom().unwrap_or("?")))
                    .collect::<Result<Vec<_>, _>>()?;
                rels.sigs.insert(name.clone(), sorts);
            }
            _ => {}
        }
    }

    struct RawClause {
        vars: Vec<(String, Sort)>,
        body: Formula,
        head: Option<(String, Vec<Formula>)>,
    }
    let mut clauses = Vec::new();
    for form in &forms {
        let Some(items) = form.as_list() else { continue };
        if items.first().and_then(Sexp::as_atom) != Some("assert") {
            continue;
        }
        let Some(assertion) = items.get(1) else {
            return perr("empty assert");
        };
        // (forall (vars) (=> body head)) or a bare implication.
        let (vars, imp) = match assertion.as_list() {
            Some([q, binders, body]) if q.as_atom() == Some("forall") => {
                let mut vars = Vec::new();
                for b in binders.as_list().unwrap_or(&[]) {
                    match b.as_list() {
                        Some([Sexp::Atom(n, _), Sexp::Atom(s, _)]) => {
                            vars.push((n.clone(), parse_sort(s)?))
                        }
                        _ => return perr("binder"),
                    }
                }
                (vars, body.clone())
            }
            _ => (Vec::new(), assertion.clone()),
        };
        let Some([arrow, body_form, head_form]) = imp.as_list().map(|i| match i {
            [a, b, c] => [a.clone(), b.clone(), c.clone()],
            _ => [imp.clone(), imp.clone(), imp.clone()],
        }) else {
            return perr("clause shape");
        };
        if arrow.as_atom() != Some("=>") {
            return perr("expected an implication clause");
        }
        let mut env = vars.clone();
        let body = parse_formula(&body_form, &mut env, &rels)?;
        let head = match &head_form {
            Sexp::Atom(a, _) if a == "false" => None,
            other => {
                let parsed = parse_formula(other, &mut env, &rels)?;
                match parsed {
                    Formula::RelApp { rel, args, .. } => Some((rel.base, args)),
                    _ => return perr("clause head must be a relation or false"),
                }
            }
        };
        clauses.push(RawClause { vars, body, head });
    }

    // Group rule clauses into equations keyed by head relation.
    let mut equations: Vec<FixpointEquation> = Vec::new();
    for c in clauses.iter().filter(|c| c.head.is_some()) {
        let (rel, head_args) = c.head.as_ref().unwrap();
        // Head arguments are plain variables in emitted scripts; they name
        // the equation parameters.
        let params: Vec<(String, Sort)> = head_args
            .iter()
            .map(|a| match a {
                Formula::Var(n, s) => Ok((n.clone(), s.clone())),
                _ => perr("clause head arguments must be variables"),
            })
            .collect::<Result<_, _>>()?;
        let cube = close_cube(&c.body, &params);
        if let Some(eq) = equations.iter_mut().find(|e| e.name == *rel) {
            match &mut eq.body {
                Formula::Or(fs) => fs.push(cube),
                other => {
                    let prev = other.clone();
                    *other = Formula::Or(vec![prev, cube]);
                }
            }
        } else {
            equations.push(FixpointEquation {
                name: rel.clone(),
                fix: Fix::Mu,
                params,
                body: cube,
            });
        }
    }
    // Inlined scripts carry large blocks of defined existentials; fold them
    // away before enumerating.
    for eq in &mut equations {
        eq.body = crate::transform::eliminate_quantifiers(&eq.body);
    }
    let interp = eval_system(&equations, dom)?;
    // sat (valid) iff no query clause body is satisfiable.
    for c in clauses.iter().filter(|c| c.head.is_none()) {
        let closed = crate::transform::eliminate_quantifiers(&Formula::exists(
            c.vars.clone(),
            c.body.clone(),
        ));
        if eval_closed(&closed, &interp, dom) {
            return Ok(Verdict::Invalid);
        }
    }
    Ok(Verdict::Valid)
}

/// A parsed `muclp-v1` script.
pub struct MuclpScript {
    pub goal: Formula,
    pub equations: Vec<FixpointEquation>,
    /// The query is valid iff the goal is unsatisfied.
    pub negated: bool,
}

/// Parses the canonical fixed-point format produced by
/// [`crate::encode::emit_muclp`].
pub fn parse_muclp(text: &str) -> Result<MuclpScript, AdapterError> {
    let mut negated = false;
    let mut goal_text = String::new();
    let mut eq_lines: Vec<String> = Vec::new();
    let mut in_eqs = false;
    let mut versioned = false;
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with(';') {
            if trimmed.contains("muclp-v1") {
                versioned = true;
            }
            if trimmed.contains("polarity: negated") {
                negated = true;
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        if trimmed == "s.t." {
            in_eqs = true;
            continue;
        }
        if in_eqs {
            eq_lines.push(trimmed.to_string());
        } else {
            goal_text.push_str(trimmed);
            goal_text.push(' ');
        }
    }
    if !versioned {
        return perr("missing muclp-v1 header");
    }

    // Headers first, so bodies can reference any equation.
    struct Header {
        name: String,
        params: Vec<(String, Sort)>,
        fix: Fix,
        body_text: String,
    }
    let mut headers = Vec::new();
    for line in &eq_lines {
        let line = line.strip_suffix(';').unwrap_or(line);
        let open = line
            .find('(')
            .ok_or_else(|| AdapterError::Parse(format!("equation head: {line}")))?;
        let name = line[..open].trim().to_string();
        let close = line[open..]
            .find(')')
            .map(|i| open + i)
            .ok_or_else(|| AdapterError::Parse(format!("equation head: {line}")))?;
        let params_text = &line[open + 1..close];
        let mut params = Vec::new();
        for part in params_text.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let Some((n, s)) = part.split_once(':') else {
                return perr(format!("parameter {part}"));
            };
            params.push((n.trim().to_string(), parse_sort(s.trim())?));
        }
        let rest = &line[close + 1..];
        let (fix, body_text) = if let Some((_, b)) = rest.split_once("=mu") {
            (Fix::Mu, b)
        } else if let Some((_, b)) = rest.split_once("=nu") {
            (Fix::Nu, b)
        } else {
            return perr(format!("missing =mu/=nu in: {line}"));
        };
        headers.push(Header {
            name,
            params,
            fix,
            body_text: body_text.trim().to_string(),
        });
    }
    let rels = Rels {
        sigs: headers
            .iter()
            .map(|h| (h.name.clone(), h.params.iter().map(|(_, s)| s.clone()).collect()))
            .collect(),
    };
    let mut equations = Vec::new();
    for h in headers {
        let forms = read_all(&h.body_text).map_err(|e| AdapterError::Parse(e.message))?;
        let [form] = forms.as_slice() else {
            return perr(format!("equation body of {}", h.name));
        };
        let mut env = h.params.clone();
        let body = parse_formula(form, &mut env, &rels)?;
        equations.push(FixpointEquation {
            name: h.name,
            fix: h.fix,
            params: h.params,
            body,
        });
    }
    let forms = read_all(&goal_text).map_err(|e| AdapterError::Parse(e.message))?;
    let [form] = forms.as_slice() else {
        return perr("expected exactly one goal formula");
    };
    let goal = parse_formula(form, &mut Vec::new(), &rels)?;
    Ok(MuclpScript {
        goal,
        equations,
        negated,
    })
}

/// Decides an emitted `muclp-v1` script over a finite domain.
pub fn solve_muclp_script(text: &str, dom: &FiniteDomain) -> Result<Verdict, AdapterError> {
    let mut script = parse_muclp(text)?;
    for eq in &mut script.equations {
        eq.body = crate::transform::eliminate_quantifiers(&eq.body);
    }
    let interp = eval_system(&script.equations, dom)?;
    let holds = eval_closed(&script.goal, &interp, dom);
    let valid = if script.negated { !holds } else { holds };
    Ok(if valid { Verdict::Valid } else { Verdict::Invalid })
}
