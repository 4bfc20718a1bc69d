//! Parsing and printing of problem and solution files.
//!
//! The input format is s-expression based, one top-level form per
//! declaration:
//!
//! ```text
//! (nonterminal NAME)
//! (production NAME (SYMBOL CHILD-NT*))
//! (relation NAME :for NT [:term NAME] ((PARAM SORT)*) :out (PARAM SORT))
//! (rule (RELNAME (SYMBOL CHILD-VAR*) PARAM-VAR*) FORMULA)
//! (order RELNAME+)
//! (synth-fun NAME :from NT)
//! (constraint FORMULA)
//! ```
//!
//! Formulas are s-expressions over `and or not => iff forall exists`,
//! comparisons `< <= = >= > distinct`, arithmetic `+ - *` (multiplication by
//! a constant), and relation applications `(RELNAME TERMVAR ARG*)`. Inside a
//! rule body the term argument is a child variable from the head pattern or
//! the relation's own term parameter (`self` unless overridden with
//! `:term`); inside a constraint it is a synthesis-function name. Solution
//! files contain one `(define NAME TERM)` per synthesis function. `;`
//! comments run to the end of the line. Declared identifiers may not contain
//! `!`, `#` or `~`, which are reserved for generated names.

pub mod sexp;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::analysis;
use crate::formula::{CmpOp, Formula, Quantifier, RelName, Sort, TermExpr};
use crate::semantics::{Problem, SemanticRelation, SemanticRule, Semantics, Solution};
use crate::term::{Grammar, Production, RankedSymbol, Term};
use sexp::{read_all, Sexp, Span};

/// 1-based source location of a diagnostic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpan {
    pub file: String,
    pub line: u32,
    pub column: u32,
    pub length: u32,
}

impl SourceSpan {
    fn from_span(file: &str, span: Span) -> SourceSpan {
        SourceSpan {
            file: file.to_string(),
            line: span.line,
            column: span.column,
            length: span.length.max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub span: SourceSpan,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{}:{}:{}: {}: {}",
            self.span.file, self.span.line, self.span.column, sev, self.message
        )
    }
}

/// Result of a successful parse: the validated problem plus any warnings.
#[derive(Debug, Clone)]
pub struct ParsedProblem {
    pub problem: Problem,
    pub warnings: Vec<Diagnostic>,
}

const RESERVED_CHARS: [char; 3] = ['!', '#', '~'];

struct Ctx<'a> {
    file: &'a str,
    diags: Vec<Diagnostic>,
    warnings: Vec<Diagnostic>,
}

impl<'a> Ctx<'a> {
    fn error(&mut self, span: Span, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            severity: Severity::Error,
            message: message.into(),
            span: SourceSpan::from_span(self.file, span),
        });
    }

    fn warn(&mut self, span: Span, message: impl Into<String>) {
        self.warnings.push(Diagnostic {
            severity: Severity::Warning,
            message: message.into(),
            span: SourceSpan::from_span(self.file, span),
        });
    }

    fn check_ident(&mut self, name: &str, span: Span) -> bool {
        if name.is_empty() {
            self.error(span, "empty identifier");
            return false;
        }
        if let Some(c) = name.chars().find(|c| RESERVED_CHARS.contains(c)) {
            self.error(
                span,
                format!("identifier {name} contains reserved character '{c}'"),
            );
            return false;
        }
        if name.parse::<i64>().is_ok() && name != "0" && name != "1" {
            // Grammar symbols named 0 and 1 are common; other numerals would
            // be ambiguous with integer literals.
            self.error(span, format!("numeric literal {name} cannot be a name"));
            return false;
        }
        true
    }
}

fn head_atom<'s>(form: &'s Sexp) -> Option<(&'s str, &'s [Sexp])> {
    let items = form.as_list()?;
    let head = items.first()?.as_atom()?;
    Some((head, &items[1..]))
}

/// Parses and validates a problem file. All structural invariants of the
/// domain types are either enforced here or reported as diagnostics; no
/// invalid `Problem` value escapes.
pub fn parse_problem(text: &str, file: &str) -> Result<ParsedProblem, Vec<Diagnostic>> {
    let mut ctx = Ctx {
        file,
        diags: Vec::new(),
        warnings: Vec::new(),
    };
    let forms = match read_all(text) {
        Ok(f) => f,
        Err(e) => {
            ctx.error(e.span, e.message);
            return Err(ctx.diags);
        }
    };

    let mut nonterminals: Vec<(String, Span)> = Vec::new();
    let mut productions: Vec<&Sexp> = Vec::new();
    let mut relations: Vec<&Sexp> = Vec::new();
    let mut rules: Vec<&Sexp> = Vec::new();
    let mut orders: Vec<&Sexp> = Vec::new();
    let mut synth_forms: Vec<&Sexp> = Vec::new();
    let mut constraints: Vec<&Sexp> = Vec::new();

    for form in &forms {
        match head_atom(form) {
            Some(("nonterminal", rest)) => {
                if let [Sexp::Atom(name, span)] = rest {
                    if ctx.check_ident(name, *span) {
                        if nonterminals.iter().any(|(n, _)| n == name) {
                            ctx.error(*span, format!("duplicate nonterminal {name}"));
                        } else {
                            nonterminals.push((name.clone(), *span));
                        }
                    }
                } else {
                    ctx.error(form.span(), "expected (nonterminal NAME)");
                }
            }
            Some(("production", _)) => productions.push(form),
            Some(("relation", _)) => relations.push(form),
            Some(("rule", _)) => rules.push(form),
            Some(("order", _)) => orders.push(form),
            Some(("synth-fun", _)) => synth_forms.push(form),
            Some(("constraint", _)) => constraints.push(form),
            _ => ctx.error(form.span(), "unrecognized top-level form"),
        }
    }

    // Productions.
    let mut grammar = Grammar {
        nonterminals: nonterminals.iter().map(|(n, _)| n.clone()).collect(),
        productions: Vec::new(),
    };
    for form in &productions {
        let Some((_, rest)) = head_atom(form) else {
            continue;
        };
        let (lhs, lhs_span, body) = match rest {
            [Sexp::Atom(lhs, span), body] => (lhs.clone(), *span, body),
            _ => {
                ctx.error(form.span(), "expected (production NAME (SYMBOL CHILD*))");
                continue;
            }
        };
        if !grammar.has_nonterminal(&lhs) {
            ctx.error(lhs_span, format!("unknown nonterminal {lhs}"));
            continue;
        }
        let Some(items) = body.as_list() else {
            ctx.error(body.span(), "production right-hand side must be a list");
            continue;
        };
        let Some(sym_name) = items.first().and_then(Sexp::as_atom) else {
            ctx.error(body.span(), "expected (SYMBOL CHILD*)");
            continue;
        };
        if !ctx.check_ident(sym_name, items[0].span()) {
            continue;
        }
        let mut arg_types = Vec::new();
        let mut ok = true;
        for child in &items[1..] {
            match child.as_atom() {
                Some(nt) if grammar.has_nonterminal(nt) => arg_types.push(nt.to_string()),
                Some(nt) => {
                    ctx.error(child.span(), format!("unknown nonterminal {nt}"));
                    ok = false;
                }
                None => {
                    ctx.error(child.span(), "child positions must name nonterminals");
                    ok = false;
                }
            }
        }
        if !ok {
            continue;
        }
        let symbol = RankedSymbol::new(sym_name, arg_types, lhs.clone());
        if let Some(existing) = grammar.symbol(sym_name) {
            if *existing != symbol {
                ctx.error(
                    body.span(),
                    format!("symbol {sym_name} redeclared with a different type"),
                );
                continue;
            }
            if grammar.production_for(&lhs, sym_name).is_some() {
                ctx.error(body.span(), format!("duplicate production {lhs} -> {sym_name}"));
                continue;
            }
        }
        grammar.productions.push(Production { lhs, symbol });
    }
    match grammar.validate() {
        Ok(ws) => {
            for w in ws {
                // No span better than the file start for a missing production.
                ctx.warn(Span::point(1, 1), w);
            }
        }
        Err(e) => ctx.error(Span::point(1, 1), e.to_string()),
    }

    // Relations.
    let mut sem = Semantics::default();
    for form in &relations {
        let Some((_, rest)) = head_atom(form) else {
            continue;
        };
        if let Some(rel) = parse_relation(&mut ctx, &grammar, rest, form.span()) {
            if sem.relation(&rel.name).is_some() {
                ctx.error(form.span(), format!("duplicate relation {}", rel.name));
            } else {
                sem.relations.push(rel);
            }
        }
    }
    // Declaration order is the default evaluation order.
    sem.order = sem.relations.iter().map(|r| r.name.clone()).collect();
    if orders.len() > 1 {
        ctx.error(orders[1].span(), "at most one (order ...) form is allowed");
    }
    if let Some(form) = orders.first() {
        let Some((_, rest)) = head_atom(form) else {
            unreachable!()
        };
        let mut names = Vec::new();
        for item in rest {
            match item.as_atom() {
                Some(n) if sem.relation(n).is_some() => names.push(n.to_string()),
                Some(n) => ctx.error(item.span(), format!("unknown relation {n}")),
                None => ctx.error(item.span(), "expected a relation name"),
            }
        }
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if names.len() == sem.relations.len() && sorted.len() == names.len() {
            sem.order = names;
        } else {
            ctx.error(
                form.span(),
                "(order ...) must list every declared relation exactly once",
            );
        }
    }

    // Synthesis functions (needed before constraints).
    let mut synth_funs: Vec<(String, String)> = Vec::new();
    for form in &synth_forms {
        let Some((_, rest)) = head_atom(form) else {
            continue;
        };
        match rest {
            [Sexp::Atom(name, nspan), Sexp::Atom(kw, _), Sexp::Atom(nt, ntspan)]
                if kw == ":from" =>
            {
                if !ctx.check_ident(name, *nspan) {
                    continue;
                }
                if !grammar.has_nonterminal(nt) {
                    ctx.error(*ntspan, format!("unknown nonterminal {nt}"));
                    continue;
                }
                if synth_funs.iter().any(|(f, _)| f == name) {
                    ctx.error(*nspan, format!("duplicate synth-fun {name}"));
                } else {
                    synth_funs.push((name.clone(), nt.clone()));
                }
            }
            _ => ctx.error(form.span(), "expected (synth-fun NAME :from NT)"),
        }
    }

    // Rules.
    for form in &rules {
        let Some((_, rest)) = head_atom(form) else {
            continue;
        };
        if let Some(rule) = parse_rule(&mut ctx, &grammar, &sem, rest, form.span()) {
            let key = (rule.relation.clone(), rule.symbol.clone());
            if sem.rules.contains_key(&key) {
                ctx.error(
                    form.span(),
                    format!(
                        "duplicate rule for relation {} and production {} -> {}",
                        rule.relation, rule.lhs, rule.symbol
                    ),
                );
            } else {
                sem.rules.insert(key, rule);
            }
        }
    }
    if let Err(e) = sem.validate(&grammar) {
        ctx.error(Span::point(1, 1), e.to_string());
    }

    // Constraints.
    let mut spec_parts = Vec::new();
    for form in &constraints {
        let Some((_, rest)) = head_atom(form) else {
            continue;
        };
        let [body] = rest else {
            ctx.error(form.span(), "expected (constraint FORMULA)");
            continue;
        };
        let mut scope = Scope::for_constraint(&synth_funs);
        if let Some(f) = parse_formula(&mut ctx, &grammar, &sem, &mut scope, body, Some(Sort::Bool))
        {
            spec_parts.push(f);
        }
    }
    if constraints.is_empty() {
        ctx.warn(Span::point(1, 1), "no constraint given; specification is true");
    }
    let spec = match spec_parts.len() {
        0 => Formula::BoolConst(true),
        1 => spec_parts.pop().unwrap(),
        _ => Formula::And(spec_parts),
    };

    for (fun, _) in &synth_funs {
        if !spec
            .free_vars()
            .iter()
            .any(|(n, s)| n == fun && matches!(s, Sort::TermSort(_)))
        {
            ctx.warn(
                Span::point(1, 1),
                format!("synth-fun {fun} does not occur in the specification"),
            );
        }
    }

    if !ctx.diags.is_empty() {
        return Err(ctx.diags);
    }

    // Self-negativity of rule bodies (directly or through other relations).
    let problem = Problem {
        grammar,
        semantics: sem,
        synth_funs,
        spec,
    };
    if let Err(msgs) = analysis::polarity_closure(&problem.semantics) {
        for m in msgs {
            ctx.error(Span::point(1, 1), m);
        }
        return Err(ctx.diags);
    }

    Ok(ParsedProblem {
        problem,
        warnings: ctx.warnings,
    })
}

fn parse_relation(
    ctx: &mut Ctx,
    grammar: &Grammar,
    rest: &[Sexp],
    span: Span,
) -> Option<SemanticRelation> {
    // NAME :for NT [:term NAME] (params) :out (param)
    let mut it = rest.iter();
    let name_form = it.next()?;
    let name = name_form.as_atom()?.to_string();
    if !ctx.check_ident(&name, name_form.span()) {
        return None;
    }
    let mut nonterminal = None;
    let mut term_param = "self".to_string();
    let mut state_params = None;
    let mut output = None;
    while let Some(form) = it.next() {
        match form.as_atom() {
            Some(":for") => {
                let nt = it.next().and_then(Sexp::as_atom);
                match nt {
                    Some(nt) if grammar.has_nonterminal(nt) => nonterminal = Some(nt.to_string()),
                    Some(nt) => {
                        ctx.error(form.span(), format!("unknown nonterminal {nt}"));
                        return None;
                    }
                    None => {
                        ctx.error(form.span(), ":for expects a nonterminal name");
                        return None;
                    }
                }
            }
            Some(":term") => match it.next().and_then(Sexp::as_atom) {
                Some(t) => term_param = t.to_string(),
                None => {
                    ctx.error(form.span(), ":term expects a variable name");
                    return None;
                }
            },
            Some(":out") => match it.next() {
                Some(p) => match parse_param(ctx, p) {
                    Some(pair) => output = Some(pair),
                    None => return None,
                },
                None => {
                    ctx.error(form.span(), ":out expects (NAME SORT)");
                    return None;
                }
            },
            _ => {
                let Some(items) = form.as_list() else {
                    ctx.error(form.span(), "unexpected token in relation declaration");
                    return None;
                };
                let mut params = Vec::new();
                for p in items {
                    params.push(parse_param(ctx, p)?);
                }
                state_params = Some(params);
            }
        }
    }
    let (Some(nonterminal), Some(state_params), Some(output)) =
        (nonterminal, state_params, output)
    else {
        ctx.error(span, "relation declaration needs :for, a parameter list and :out");
        return None;
    };
    let mut names: Vec<&String> = state_params.iter().map(|(n, _)| n).collect();
    names.push(&output.0);
    let mut dedup = names.clone();
    dedup.sort();
    dedup.dedup();
    if dedup.len() != names.len() {
        ctx.error(span, format!("relation {name} has repeated parameter names"));
        return None;
    }
    Some(SemanticRelation {
        name,
        nonterminal,
        term_param,
        state_params,
        output_param: output,
    })
}

fn parse_param(ctx: &mut Ctx, form: &Sexp) -> Option<(String, Sort)> {
    let items = form.as_list()?;
    if let [Sexp::Atom(name, nspan), Sexp::Atom(sort, sspan)] = items {
        if !ctx.check_ident(name, *nspan) {
            return None;
        }
        let sort = match sort.as_str() {
            "Int" => Sort::Int,
            "Bool" => Sort::Bool,
            other => {
                ctx.error(*sspan, format!("unknown sort {other} (expected Int or Bool)"));
                return None;
            }
        };
        Some((name.clone(), sort))
    } else {
        ctx.error(form.span(), "expected (NAME SORT)");
        None
    }
}

fn parse_rule(
    ctx: &mut Ctx,
    grammar: &Grammar,
    sem: &Semantics,
    rest: &[Sexp],
    span: Span,
) -> Option<SemanticRule> {
    let [head, body] = rest else {
        ctx.error(span, "expected (rule HEAD FORMULA)");
        return None;
    };
    let head_items = head.as_list()?;
    let Some(rel_name) = head_items.first().and_then(Sexp::as_atom) else {
        ctx.error(head.span(), "rule head must start with a relation name");
        return None;
    };
    let Some(rel) = sem.relation(rel_name) else {
        ctx.error(head_items[0].span(), format!("unknown relation {rel_name}"));
        return None;
    };
    let rel = rel.clone();
    let Some(pattern) = head_items.get(1) else {
        ctx.error(head.span(), "rule head needs a term pattern");
        return None;
    };
    let Some(pat_items) = pattern.as_list() else {
        ctx.error(
            pattern.span(),
            "term pattern must be (SYMBOL CHILD-VAR*), even for rank-0 symbols",
        );
        return None;
    };
    let Some(sym_name) = pat_items.first().and_then(Sexp::as_atom) else {
        ctx.error(pattern.span(), "term pattern must start with a symbol");
        return None;
    };
    let Some(production) = grammar.production_for(&rel.nonterminal, sym_name) else {
        ctx.error(
            pattern.span(),
            format!("no production {} -> {sym_name}", rel.nonterminal),
        );
        return None;
    };
    let production = production.clone();
    if pat_items.len() - 1 != production.symbol.rank() {
        ctx.error(
            pattern.span(),
            format!(
                "symbol {sym_name} has rank {}, pattern has {} children",
                production.symbol.rank(),
                pat_items.len() - 1
            ),
        );
        return None;
    }
    let mut child_vars = Vec::new();
    for item in &pat_items[1..] {
        let Some(v) = item.as_atom() else {
            ctx.error(item.span(), "child positions must be variables");
            return None;
        };
        if !ctx.check_ident(v, item.span()) {
            return None;
        }
        child_vars.push(v.to_string());
    }
    let mut dedup = child_vars.clone();
    dedup.push(rel.term_param.clone());
    dedup.sort();
    let before = dedup.len();
    dedup.dedup();
    if dedup.len() != before {
        ctx.error(
            pattern.span(),
            "child variables must be distinct and must not shadow the relation's term parameter",
        );
        return None;
    }

    // Head parameter variables; they rename the declared parameters.
    let declared = rel.params();
    let head_params = &head_items[2..];
    if head_params.len() != declared.len() {
        ctx.error(
            head.span(),
            format!(
                "relation {rel_name} has {} parameters, head lists {}",
                declared.len(),
                head_params.len()
            ),
        );
        return None;
    }
    let mut local_params = Vec::new();
    for (item, (_, sort)) in head_params.iter().zip(&declared) {
        let Some(v) = item.as_atom() else {
            ctx.error(item.span(), "head parameters must be variables");
            return None;
        };
        if !ctx.check_ident(v, item.span()) {
            return None;
        }
        local_params.push((v.to_string(), sort.clone()));
    }
    {
        let mut names: Vec<&String> = local_params.iter().map(|(n, _)| n).collect();
        names.sort();
        let before = names.len();
        names.dedup();
        if names.len() != before {
            ctx.error(head.span(), "head parameters must be distinct");
            return None;
        }
    }

    let mut scope = Scope::for_rule(&rel, &production, &child_vars, &local_params);
    let parsed = parse_formula(ctx, grammar, sem, &mut scope, body, Some(Sort::Bool))?;

    // Rename local head parameters to the declared names (simultaneously).
    let renames: Vec<(String, String, Sort)> = local_params
        .iter()
        .zip(&declared)
        .filter(|((l, _), (d, _))| l != d)
        .map(|((l, _), (d, s))| (l.clone(), d.clone(), s.clone()))
        .collect();
    let body = rename_parallel(parsed, &renames);

    Some(SemanticRule {
        relation: rel.name.clone(),
        lhs: production.lhs.clone(),
        symbol: production.symbol.name.clone(),
        child_term_params: child_vars,
        body,
    })
}

/// Simultaneous variable renaming, via a fresh intermediate stage so swaps
/// like `x -> y, y -> x` work.
fn rename_parallel(body: Formula, renames: &[(String, String, Sort)]) -> Formula {
    use crate::formula::Subst;
    let mut f = body;
    let tmp: Vec<String> = (0..renames.len()).map(|i| format!("rename!{i}")).collect();
    for ((from, _, sort), t) in renames.iter().zip(&tmp) {
        f = f
            .substitute(from, &Subst::Expr(Formula::Var(t.clone(), sort.clone())))
            .expect("rename preserves sorts");
    }
    for ((_, to, sort), t) in renames.iter().zip(&tmp) {
        f = f
            .substitute(t, &Subst::Expr(Formula::Var(to.clone(), sort.clone())))
            .expect("rename preserves sorts");
    }
    f
}

/// Variable scope for formula parsing.
struct Scope {
    /// First-order variables currently in scope.
    vars: Vec<(String, Sort)>,
    /// Term variables: name -> nonterminal.
    term_vars: BTreeMap<String, String>,
    /// Synthesis functions (constraint context only): name -> nonterminal.
    synth_funs: BTreeMap<String, String>,
    in_rule: bool,
}

impl Scope {
    fn for_rule(
        rel: &SemanticRelation,
        production: &Production,
        child_vars: &[String],
        local_params: &[(String, Sort)],
    ) -> Scope {
        let mut term_vars = BTreeMap::new();
        term_vars.insert(rel.term_param.clone(), rel.nonterminal.clone());
        for (v, nt) in child_vars.iter().zip(&production.symbol.arg_types) {
            term_vars.insert(v.clone(), nt.clone());
        }
        Scope {
            vars: local_params.to_vec(),
            term_vars,
            synth_funs: BTreeMap::new(),
            in_rule: true,
        }
    }

    fn for_constraint(synth_funs: &[(String, String)]) -> Scope {
        Scope {
            vars: Vec::new(),
            term_vars: BTreeMap::new(),
            synth_funs: synth_funs.iter().cloned().collect(),
            in_rule: false,
        }
    }

    fn lookup(&self, name: &str) -> Option<&Sort> {
        self.vars
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
    }
}

fn parse_formula(
    ctx: &mut Ctx,
    grammar: &Grammar,
    sem: &Semantics,
    scope: &mut Scope,
    form: &Sexp,
    expected: Option<Sort>,
) -> Option<Formula> {
    let result = parse_formula_inner(ctx, grammar, sem, scope, form)?;
    if let Some(expected) = expected {
        let actual = result.sort();
        if actual != expected {
            let what = if matches!(result, Formula::RelApp { .. }) && expected == Sort::Int {
                "relation application used as an integer term".to_string()
            } else {
                format!("expected a {expected} expression, got {actual}")
            };
            ctx.error(form.span(), what);
            return None;
        }
    }
    Some(result)
}

fn parse_formula_inner(
    ctx: &mut Ctx,
    grammar: &Grammar,
    sem: &Semantics,
    scope: &mut Scope,
    form: &Sexp,
) -> Option<Formula> {
    match form {
        Sexp::Atom(a, span) => {
            if let Ok(n) = a.parse::<i64>() {
                return Some(Formula::IntConst(n));
            }
            match a.as_str() {
                "true" => return Some(Formula::BoolConst(true)),
                "false" => return Some(Formula::BoolConst(false)),
                _ => {}
            }
            if let Some(sort) = scope.lookup(a) {
                return Some(Formula::Var(a.clone(), sort.clone()));
            }
            if scope.synth_funs.contains_key(a) || scope.term_vars.contains_key(a) {
                ctx.error(
                    *span,
                    format!(
                        "{a} names a program term and may only appear as the term argument of a relation application"
                    ),
                );
                return None;
            }
            ctx.error(*span, format!("unknown variable {a}"));
            None
        }
        Sexp::List(items, span) => {
            let Some(head) = items.first().and_then(Sexp::as_atom) else {
                ctx.error(*span, "expected an operator or relation name");
                return None;
            };
            let args = &items[1..];
            match head {
                "and" | "or" => {
                    let mut parts = Vec::new();
                    for a in args {
                        parts.push(parse_formula(ctx, grammar, sem, scope, a, Some(Sort::Bool))?);
                    }
                    if parts.is_empty() {
                        ctx.error(*span, format!("({head}) needs at least one argument"));
                        return None;
                    }
                    Some(if head == "and" {
                        crate::formula::and_of(parts)
                    } else {
                        crate::formula::or_of(parts)
                    })
                }
                "not" => {
                    let [a] = args else {
                        ctx.error(*span, "(not ...) takes one argument");
                        return None;
                    };
                    Some(Formula::not(parse_formula(
                        ctx,
                        grammar,
                        sem,
                        scope,
                        a,
                        Some(Sort::Bool),
                    )?))
                }
                "=>" | "iff" => {
                    let [a, b] = args else {
                        ctx.error(*span, format!("({head} ...) takes two arguments"));
                        return None;
                    };
                    let a = parse_formula(ctx, grammar, sem, scope, a, Some(Sort::Bool))?;
                    let b = parse_formula(ctx, grammar, sem, scope, b, Some(Sort::Bool))?;
                    Some(if head == "=>" {
                        Formula::implies(a, b)
                    } else {
                        Formula::iff(a, b)
                    })
                }
                "forall" | "exists" => {
                    let [binders, body] = args else {
                        ctx.error(*span, format!("({head} ((x Int)...) BODY)"));
                        return None;
                    };
                    let Some(bs) = binders.as_list() else {
                        ctx.error(binders.span(), "expected a binder list");
                        return None;
                    };
                    let mut vars = Vec::new();
                    for b in bs {
                        vars.push(parse_param(ctx, b)?);
                    }
                    if vars.is_empty() {
                        ctx.error(binders.span(), "binder list must not be empty");
                        return None;
                    }
                    let n = scope.vars.len();
                    scope.vars.extend(vars.iter().cloned());
                    let body = parse_formula(ctx, grammar, sem, scope, body, Some(Sort::Bool));
                    scope.vars.truncate(n);
                    let q = if head == "forall" {
                        Quantifier::Forall
                    } else {
                        Quantifier::Exists
                    };
                    Some(Formula::Quant(q, vars, Box::new(body?)))
                }
                "<" | "<=" | "=" | ">=" | ">" | "distinct" => {
                    let [a, b] = args else {
                        ctx.error(*span, format!("({head} ...) takes two arguments"));
                        return None;
                    };
                    let a = parse_formula(ctx, grammar, sem, scope, a, Some(Sort::Int))?;
                    let b = parse_formula(ctx, grammar, sem, scope, b, Some(Sort::Int))?;
                    let op = match head {
                        "<" => CmpOp::Lt,
                        "<=" => CmpOp::Le,
                        "=" => CmpOp::Eq,
                        ">=" => CmpOp::Ge,
                        ">" => CmpOp::Gt,
                        _ => CmpOp::Ne,
                    };
                    Some(Formula::Cmp(op, Box::new(a), Box::new(b)))
                }
                "+" => {
                    if args.len() < 2 {
                        ctx.error(*span, "(+ ...) takes at least two arguments");
                        return None;
                    }
                    let mut acc = parse_formula(ctx, grammar, sem, scope, &args[0], Some(Sort::Int))?;
                    for a in &args[1..] {
                        let rhs = parse_formula(ctx, grammar, sem, scope, a, Some(Sort::Int))?;
                        acc = Formula::Add(Box::new(acc), Box::new(rhs));
                    }
                    Some(acc)
                }
                "-" => match args {
                    [a] => {
                        let a = parse_formula(ctx, grammar, sem, scope, a, Some(Sort::Int))?;
                        Some(Formula::Sub(Box::new(Formula::IntConst(0)), Box::new(a)))
                    }
                    [a, b] => {
                        let a = parse_formula(ctx, grammar, sem, scope, a, Some(Sort::Int))?;
                        let b = parse_formula(ctx, grammar, sem, scope, b, Some(Sort::Int))?;
                        Some(Formula::Sub(Box::new(a), Box::new(b)))
                    }
                    _ => {
                        ctx.error(*span, "(- ...) takes one or two arguments");
                        None
                    }
                },
                "*" => {
                    let [a, b] = args else {
                        ctx.error(*span, "(* ...) takes two arguments");
                        return None;
                    };
                    let a = parse_formula(ctx, grammar, sem, scope, a, Some(Sort::Int))?;
                    let b = parse_formula(ctx, grammar, sem, scope, b, Some(Sort::Int))?;
                    match (&a, &b) {
                        (Formula::IntConst(c), _) => Some(Formula::Mul(*c, Box::new(b))),
                        (_, Formula::IntConst(c)) => Some(Formula::Mul(*c, Box::new(a))),
                        _ => {
                            ctx.error(*span, "multiplication must have a constant factor");
                            None
                        }
                    }
                }
                name if sem.relation(name).is_some() => {
                    parse_rel_app(ctx, grammar, sem, scope, name, args, *span)
                }
                other => {
                    ctx.error(*span, format!("unknown operator or relation {other}"));
                    None
                }
            }
        }
    }
}

fn parse_rel_app(
    ctx: &mut Ctx,
    grammar: &Grammar,
    sem: &Semantics,
    scope: &mut Scope,
    name: &str,
    args: &[Sexp],
    span: Span,
) -> Option<Formula> {
    let rel = sem.relation(name).expect("checked by caller").clone();
    let Some(term_form) = args.first() else {
        ctx.error(span, format!("relation {name} needs a term argument"));
        return None;
    };
    let term = match term_form.as_atom() {
        Some(v) => {
            if let Some(nt) = scope.term_vars.get(v) {
                if nt != &rel.nonterminal {
                    ctx.error(
                        term_form.span(),
                        format!(
                            "relation {name} is declared for nonterminal {}, but {v} derives from {nt}",
                            rel.nonterminal
                        ),
                    );
                    return None;
                }
                TermExpr::Var(v.to_string(), nt.clone())
            } else if let Some(nt) = scope.synth_funs.get(v) {
                if nt != &rel.nonterminal {
                    ctx.error(
                        term_form.span(),
                        format!(
                            "relation {name} is declared for nonterminal {}, but synth-fun {v} derives from {nt}",
                            rel.nonterminal
                        ),
                    );
                    return None;
                }
                TermExpr::Var(v.to_string(), nt.clone())
            } else {
                let what = if scope.in_rule {
                    "a child variable from the head pattern or the relation's term parameter"
                } else {
                    "a synth-fun name"
                };
                ctx.error(
                    term_form.span(),
                    format!("term argument of {name} must be {what}; {v} is not"),
                );
                return None;
            }
        }
        None => {
            let _ = grammar;
            ctx.error(
                term_form.span(),
                format!("term argument of {name} must be a term variable, not a composite term"),
            );
            return None;
        }
    };
    let declared = rel.params();
    let rest = &args[1..];
    if rest.len() != declared.len() {
        ctx.error(
            span,
            format!(
                "relation {name} takes {} arguments after the term, got {}",
                declared.len(),
                rest.len()
            ),
        );
        return None;
    }
    let mut parsed = Vec::new();
    for (a, (_, sort)) in rest.iter().zip(&declared) {
        parsed.push(parse_formula(ctx, grammar, sem, scope, a, Some(sort.clone()))?);
    }
    Some(Formula::RelApp {
        rel: RelName::plain(name),
        term: Some(term),
        args: parsed,
    })
}

/// Parses a solution file against a validated problem.
pub fn parse_solution(
    text: &str,
    file: &str,
    problem: &Problem,
) -> Result<Solution, Vec<Diagnostic>> {
    let mut ctx = Ctx {
        file,
        diags: Vec::new(),
        warnings: Vec::new(),
    };
    let forms = match read_all(text) {
        Ok(f) => f,
        Err(e) => {
            ctx.error(e.span, e.message);
            return Err(ctx.diags);
        }
    };
    let mut solution = Solution::default();
    for form in &forms {
        match head_atom(form) {
            Some(("define", [Sexp::Atom(name, nspan), term_form])) => {
                let Some((_, nt)) = problem.synth_funs.iter().find(|(f, _)| f == name) else {
                    ctx.error(*nspan, format!("unknown synth-fun {name}"));
                    continue;
                };
                let Some(term) = parse_term(&mut ctx, &problem.grammar, term_form) else {
                    continue;
                };
                match problem.grammar.check_term(&term, nt) {
                    Ok(true) => {
                        if solution.bindings.insert(name.clone(), term).is_some() {
                            ctx.error(*nspan, format!("duplicate binding for {name}"));
                        }
                    }
                    Ok(false) => {
                        ctx.error(term_form.span(), format!("term is not in L({nt})"));
                    }
                    Err(e) => ctx.error(term_form.span(), e.to_string()),
                }
            }
            _ => ctx.error(form.span(), "expected (define NAME TERM)"),
        }
    }
    for (fun, _) in &problem.synth_funs {
        if solution.term_for(fun).is_none() {
            ctx.error(Span::point(1, 1), format!("missing binding for {fun}"));
        }
    }
    if ctx.diags.is_empty() {
        Ok(solution)
    } else {
        Err(ctx.diags)
    }
}

fn parse_term(ctx: &mut Ctx, grammar: &Grammar, form: &Sexp) -> Option<Term> {
    let (sym_name, children_forms): (&str, &[Sexp]) = match form {
        Sexp::Atom(a, _) => (a.as_str(), &[]),
        Sexp::List(items, span) => {
            let Some(h) = items.first().and_then(Sexp::as_atom) else {
                ctx.error(*span, "term must start with a symbol");
                return None;
            };
            (h, &items[1..])
        }
    };
    let Some(symbol) = grammar.symbol(sym_name).cloned() else {
        ctx.error(form.span(), format!("unknown symbol {sym_name}"));
        return None;
    };
    let mut children = Vec::new();
    for c in children_forms {
        children.push(parse_term(ctx, grammar, c)?);
    }
    match Term::new(symbol, children) {
        Ok(t) => Some(t),
        Err(e) => {
            ctx.error(form.span(), e.to_string());
            None
        }
    }
}

// ---------------------------------------------------------------------------
// Printing. `parse ∘ print` is the identity on parsed values.
// ---------------------------------------------------------------------------

pub fn print_formula(f: &Formula) -> String {
    let mut s = String::new();
    write_formula(&mut s, f);
    s
}

fn write_formula(out: &mut String, f: &Formula) {
    match f {
        Formula::IntConst(n) => {
            let _ = write!(out, "{n}");
        }
        Formula::BoolConst(b) => {
            let _ = write!(out, "{b}");
        }
        Formula::Var(v, _) => out.push_str(v),
        Formula::Add(a, b) => write_binary(out, "+", a, b),
        Formula::Sub(a, b) => write_binary(out, "-", a, b),
        Formula::Mul(c, a) => {
            let _ = write!(out, "(* {c} ");
            write_formula(out, a);
            out.push(')');
        }
        Formula::Cmp(op, a, b) => write_binary(out, op.token(), a, b),
        Formula::Not(a) => {
            out.push_str("(not ");
            write_formula(out, a);
            out.push(')');
        }
        Formula::And(fs) => write_nary(out, "and", fs),
        Formula::Or(fs) => write_nary(out, "or", fs),
        Formula::Implies(a, b) => write_binary(out, "=>", a, b),
        Formula::Iff(a, b) => write_binary(out, "iff", a, b),
        Formula::Quant(q, vars, body) => {
            let _ = write!(out, "({} (", q.token());
            for (i, (v, s)) in vars.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "({v} {s})");
            }
            out.push_str(") ");
            write_formula(out, body);
            out.push(')');
        }
        Formula::RelApp { rel, term, args } => {
            let _ = write!(out, "({rel}");
            if let Some(t) = term {
                let _ = write!(out, " {t}");
            }
            for a in args {
                out.push(' ');
                write_formula(out, a);
            }
            out.push(')');
        }
    }
}

fn write_binary(out: &mut String, op: &str, a: &Formula, b: &Formula) {
    let _ = write!(out, "({op} ");
    write_formula(out, a);
    out.push(' ');
    write_formula(out, b);
    out.push(')');
}

fn write_nary(out: &mut String, op: &str, fs: &[Formula]) {
    let _ = write!(out, "({op}");
    for f in fs {
        out.push(' ');
        write_formula(out, f);
    }
    out.push(')');
}

pub fn print_problem(p: &Problem) -> String {
    let mut out = String::new();
    for nt in &p.grammar.nonterminals {
        let _ = writeln!(out, "(nonterminal {nt})");
    }
    for prod in &p.grammar.productions {
        let _ = write!(out, "(production {} ({}", prod.lhs, prod.symbol.name);
        for c in &prod.symbol.arg_types {
            let _ = write!(out, " {c}");
        }
        let _ = writeln!(out, "))");
    }
    for r in &p.semantics.relations {
        let _ = write!(out, "(relation {} :for {}", r.name, r.nonterminal);
        if r.term_param != "self" {
            let _ = write!(out, " :term {}", r.term_param);
        }
        let _ = write!(out, " (");
        for (i, (n, s)) in r.state_params.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "({n} {s})");
        }
        let _ = writeln!(out, ") :out ({} {}))", r.output_param.0, r.output_param.1);
    }
    if !p.semantics.order.is_empty() {
        let _ = writeln!(out, "(order {})", p.semantics.order.join(" "));
    }
    for rule in p.semantics.rules.values() {
        let _ = write!(out, "(rule ({} ({}", rule.relation, rule.symbol);
        for v in &rule.child_term_params {
            let _ = write!(out, " {v}");
        }
        let _ = write!(out, ")");
        let rel = p
            .semantics
            .relation(&rule.relation)
            .expect("validated problem");
        for (n, _) in rel.params() {
            let _ = write!(out, " {n}");
        }
        let _ = writeln!(out, ") {})", print_formula(&rule.body));
    }
    for (f, nt) in &p.synth_funs {
        let _ = writeln!(out, "(synth-fun {f} :from {nt})");
    }
    let _ = writeln!(out, "(constraint {})", print_formula(&p.spec));
    out
}

pub fn print_solution(s: &Solution) -> String {
    let mut out = String::new();
    for (fun, term) in &s.bindings {
        let _ = writeln!(out, "(define {fun} {term})");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"
; a one-nonterminal language of numerals
(nonterminal E)
(production E (zero))
(production E (succ E))
(relation Sem_E :for E ((x Int)) :out (r Int))
(rule (Sem_E (zero) x r) (= r 0))
(rule (Sem_E (succ e) x r) (exists ((r2 Int)) (and (Sem_E e x r2) (= r (+ r2 1)))))
(synth-fun f :from E)
(constraint (forall ((x Int)) (exists ((r Int)) (Sem_E f x r))))
"#;

    #[test]
    fn parses_a_small_problem() {
        let parsed = parse_problem(TOY, "toy.sem").expect("parse");
        let p = &parsed.problem;
        assert_eq!(p.grammar.nonterminals, vec!["E"]);
        assert_eq!(p.grammar.productions.len(), 2);
        assert_eq!(p.semantics.relations.len(), 1);
        assert_eq!(p.semantics.rules.len(), 2);
        assert_eq!(p.synth_funs, vec![("f".to_string(), "E".to_string())]);
    }

    #[test]
    fn print_then_parse_is_identity() {
        let parsed = parse_problem(TOY, "toy.sem").expect("parse");
        let printed = print_problem(&parsed.problem);
        let reparsed = parse_problem(&printed, "toy2.sem").expect("reparse");
        assert_eq!(parsed.problem, reparsed.problem);
    }

    #[test]
    fn rule_with_undeclared_variable_is_an_error() {
        let bad = TOY.replace("(= r 0)", "(= z 0)");
        let err = parse_problem(&bad, "bad.sem").unwrap_err();
        assert!(err.iter().any(|d| d.message.contains("unknown variable z")));
    }

    #[test]
    fn relation_application_in_integer_position_is_an_error() {
        let bad = TOY.replace(
            "(constraint (forall ((x Int)) (exists ((r Int)) (Sem_E f x r))))",
            "(constraint (forall ((x Int)) (< (Sem_E f x 0) 1)))",
        );
        let err = parse_problem(&bad, "bad.sem").unwrap_err();
        assert!(err
            .iter()
            .any(|d| d.message.contains("relation application used as")));
    }

    #[test]
    fn duplicate_rule_is_an_error() {
        let bad = format!("{TOY}(rule (Sem_E (zero) x r) (= r 1))");
        let err = parse_problem(&bad, "bad.sem").unwrap_err();
        assert!(err.iter().any(|d| d.message.contains("duplicate rule")));
    }

    #[test]
    fn missing_rule_is_an_error() {
        let bad = TOY.replace("(rule (Sem_E (zero) x r) (= r 0))", "");
        let err = parse_problem(&bad, "bad.sem").unwrap_err();
        assert!(err.iter().any(|d| d.message.contains("no rule for relation")));
    }

    #[test]
    fn head_parameters_may_be_renamed() {
        let renamed = TOY.replace(
            "(rule (Sem_E (zero) x r) (= r 0))",
            "(rule (Sem_E (zero) a b) (= b 0))",
        );
        let p1 = parse_problem(TOY, "a.sem").unwrap().problem;
        let p2 = parse_problem(&renamed, "b.sem").unwrap().problem;
        assert_eq!(p1.semantics.rules, p2.semantics.rules);
    }

    #[test]
    fn solution_must_bind_every_synth_fun() {
        let parsed = parse_problem(TOY, "toy.sem").unwrap();
        let err = parse_solution("", "empty.sol", &parsed.problem).unwrap_err();
        assert!(err.iter().any(|d| d.message.contains("missing binding for f")));
    }

    #[test]
    fn solution_term_must_be_in_language() {
        let parsed = parse_problem(TOY, "toy.sem").unwrap();
        let sol = parse_solution("(define f (succ (succ zero)))", "s.sol", &parsed.problem);
        assert!(sol.is_ok());
        let bad = parse_solution("(define f (succ))", "s.sol", &parsed.problem);
        assert!(bad.is_err());
    }

    #[test]
    fn spec_order_defaults_to_declaration_order() {
        let parsed = parse_problem(TOY, "toy.sem").unwrap();
        assert_eq!(parsed.problem.semantics.order, vec!["Sem_E"]);
    }
}
