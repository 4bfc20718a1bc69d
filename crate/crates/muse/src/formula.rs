//! Multi-sorted first-order formulas over linear integer arithmetic and
//! booleans, extended with applications of semantic relations.
//!
//! A single AST covers both integer-sorted expressions and boolean formulas;
//! [`Formula::sort`] distinguishes them. Relation applications carry a term
//! argument ([`TermExpr`]) until reification erases it.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::term::Term;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    Int,
    Bool,
    /// Sort of grammar terms derivable from the named nonterminal.
    TermSort(String),
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Int => write!(f, "Int"),
            Sort::Bool => write!(f, "Bool"),
            Sort::TermSort(nt) => write!(f, "{nt}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
    Ne,
}

impl CmpOp {
    pub fn negated(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ge => CmpOp::Lt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ne => CmpOp::Eq,
        }
    }

    pub fn eval(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
            CmpOp::Ne => a != b,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Ne => "distinct",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quantifier {
    Forall,
    Exists,
}

impl Quantifier {
    pub fn dual(self) -> Quantifier {
        match self {
            Quantifier::Forall => Quantifier::Exists,
            Quantifier::Exists => Quantifier::Forall,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Quantifier::Forall => "forall",
            Quantifier::Exists => "exists",
        }
    }
}

/// Name of a semantic relation, possibly the complement relation introduced
/// by normalization. The complement of `Sem_A` prints as `Sem_A~`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelName {
    pub base: String,
    pub complement: bool,
}

impl RelName {
    pub fn plain(base: impl Into<String>) -> RelName {
        RelName {
            base: base.into(),
            complement: false,
        }
    }

    pub fn complemented(self) -> RelName {
        RelName {
            base: self.base,
            complement: !self.complement,
        }
    }
}

impl fmt::Display for RelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.complement {
            write!(f, "{}~", self.base)
        } else {
            write!(f, "{}", self.base)
        }
    }
}

/// Term argument of a relation application: either a concrete grammar term or
/// a term variable (a rule's own term parameter, a child term parameter, or a
/// synthesis-function name). Variables carry their nonterminal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermExpr {
    Const(Term),
    Var(String, String),
}

impl fmt::Display for TermExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TermExpr::Const(t) => write!(f, "{t}"),
            TermExpr::Var(name, _) => write!(f, "{name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    IntConst(i64),
    BoolConst(bool),
    Var(String, Sort),
    Add(Box<Formula>, Box<Formula>),
    Sub(Box<Formula>, Box<Formula>),
    /// Multiplication by an integer constant; keeps everything linear.
    Mul(i64, Box<Formula>),
    Cmp(CmpOp, Box<Formula>, Box<Formula>),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Quant(Quantifier, Vec<(String, Sort)>, Box<Formula>),
    RelApp {
        rel: RelName,
        /// `None` once the relation has been reified (term argument erased).
        term: Option<TermExpr>,
        args: Vec<Formula>,
    },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubstError {
    #[error("substituting {var}: expected sort {expected}, got {actual}")]
    SortMismatch {
        var: String,
        expected: Sort,
        actual: Sort,
    },
}

/// Value substituted for a variable: a first-order expression or a term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subst {
    Expr(Formula),
    Term(TermExpr),
}

pub fn tt() -> Formula {
    Formula::BoolConst(true)
}

pub fn ff() -> Formula {
    Formula::BoolConst(false)
}

pub fn and_of(mut conjuncts: Vec<Formula>) -> Formula {
    if conjuncts.len() == 1 {
        conjuncts.pop().unwrap()
    } else {
        Formula::And(conjuncts)
    }
}

pub fn or_of(mut disjuncts: Vec<Formula>) -> Formula {
    if disjuncts.len() == 1 {
        disjuncts.pop().unwrap()
    } else {
        Formula::Or(disjuncts)
    }
}

impl Formula {
    pub fn var(name: impl Into<String>, sort: Sort) -> Formula {
        Formula::Var(name.into(), sort)
    }

    pub fn int(n: i64) -> Formula {
        Formula::IntConst(n)
    }

    pub fn cmp(op: CmpOp, a: Formula, b: Formula) -> Formula {
        Formula::Cmp(op, Box::new(a), Box::new(b))
    }

    pub fn eq(a: Formula, b: Formula) -> Formula {
        Formula::cmp(CmpOp::Eq, a, b)
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Formula, b: Formula) -> Formula {
        Formula::Iff(Box::new(a), Box::new(b))
    }

    pub fn forall(vars: Vec<(String, Sort)>, body: Formula) -> Formula {
        if vars.is_empty() {
            body
        } else {
            Formula::Quant(Quantifier::Forall, vars, Box::new(body))
        }
    }

    pub fn exists(vars: Vec<(String, Sort)>, body: Formula) -> Formula {
        if vars.is_empty() {
            body
        } else {
            Formula::Quant(Quantifier::Exists, vars, Box::new(body))
        }
    }

    pub fn rel(rel: RelName, term: TermExpr, args: Vec<Formula>) -> Formula {
        Formula::RelApp {
            rel,
            term: Some(term),
            args,
        }
    }

    /// Sort of this node assuming the formula is well-sorted. Arithmetic is
    /// `Int`; everything else is `Bool`.
    pub fn sort(&self) -> Sort {
        match self {
            Formula::IntConst(_) | Formula::Add(..) | Formula::Sub(..) | Formula::Mul(..) => {
                Sort::Int
            }
            Formula::Var(_, s) => s.clone(),
            _ => Sort::Bool,
        }
    }

    /// Free first-order variables together with their sorts. Term variables
    /// of relation applications are reported with their term sort.
    pub fn free_vars(&self) -> BTreeSet<(String, Sort)> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<(String, Sort)>) {
        match self {
            Formula::IntConst(_) | Formula::BoolConst(_) => {}
            Formula::Var(name, sort) => {
                if !bound.iter().any(|b| b == name) {
                    out.insert((name.clone(), sort.clone()));
                }
            }
            Formula::Add(a, b) | Formula::Sub(a, b) | Formula::Cmp(_, a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Mul(_, a) | Formula::Not(a) => a.collect_free(bound, out),
            Formula::And(fs) | Formula::Or(fs) => {
                for f in fs {
                    f.collect_free(bound, out);
                }
            }
            Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Quant(_, vars, body) => {
                let n = bound.len();
                bound.extend(vars.iter().map(|(v, _)| v.clone()));
                body.collect_free(bound, out);
                bound.truncate(n);
            }
            Formula::RelApp { term, args, .. } => {
                if let Some(TermExpr::Var(name, nt)) = term {
                    // Term variables live in a separate namespace from the
                    // first-order binders, so `bound` does not apply.
                    out.insert((name.clone(), Sort::TermSort(nt.clone())));
                }
                for a in args {
                    a.collect_free(bound, out);
                }
            }
        }
    }

    /// All variable names occurring anywhere (free or bound); used to pick
    /// fresh names deterministically.
    fn all_names(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::IntConst(_) | Formula::BoolConst(_) => {}
            Formula::Var(name, _) => {
                out.insert(name.clone());
            }
            Formula::Add(a, b) | Formula::Sub(a, b) | Formula::Cmp(_, a, b) => {
                a.all_names(out);
                b.all_names(out);
            }
            Formula::Mul(_, a) | Formula::Not(a) => a.all_names(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.all_names(out)),
            Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.all_names(out);
                b.all_names(out);
            }
            Formula::Quant(_, vars, body) => {
                for (v, _) in vars {
                    out.insert(v.clone());
                }
                body.all_names(out);
            }
            Formula::RelApp { term, args, .. } => {
                if let Some(TermExpr::Var(name, _)) = term {
                    out.insert(name.clone());
                }
                args.iter().for_each(|a| a.all_names(out));
            }
        }
    }

    /// Capture-avoiding substitution of `var`. Binders that would capture a
    /// free variable of the replacement are renamed with a `!n` suffix.
    /// Replacing a variable with an expression of a different sort is an
    /// error; term substitutions replace the term argument of relation
    /// applications.
    pub fn substitute(&self, var: &str, value: &Subst) -> Result<Formula, SubstError> {
        match value {
            Subst::Expr(repl) => {
                let repl_fv = repl.free_vars();
                let mut taken: BTreeSet<String> = BTreeSet::new();
                self.all_names(&mut taken);
                repl.all_names(&mut taken);
                self.subst_expr(var, repl, &repl_fv, &mut taken)
            }
            Subst::Term(te) => Ok(self.subst_term(var, te)),
        }
    }

    fn subst_expr(
        &self,
        var: &str,
        repl: &Formula,
        repl_fv: &BTreeSet<(String, Sort)>,
        taken: &mut BTreeSet<String>,
    ) -> Result<Formula, SubstError> {
        Ok(match self {
            Formula::Var(name, sort) if name == var => {
                let actual = repl.sort();
                if actual != *sort {
                    return Err(SubstError::SortMismatch {
                        var: var.to_string(),
                        expected: sort.clone(),
                        actual,
                    });
                }
                repl.clone()
            }
            Formula::IntConst(_) | Formula::BoolConst(_) | Formula::Var(..) => self.clone(),
            Formula::Add(a, b) => Formula::Add(
                Box::new(a.subst_expr(var, repl, repl_fv, taken)?),
                Box::new(b.subst_expr(var, repl, repl_fv, taken)?),
            ),
            Formula::Sub(a, b) => Formula::Sub(
                Box::new(a.subst_expr(var, repl, repl_fv, taken)?),
                Box::new(b.subst_expr(var, repl, repl_fv, taken)?),
            ),
            Formula::Mul(c, a) => Formula::Mul(*c, Box::new(a.subst_expr(var, repl, repl_fv, taken)?)),
            Formula::Cmp(op, a, b) => Formula::Cmp(
                *op,
                Box::new(a.subst_expr(var, repl, repl_fv, taken)?),
                Box::new(b.subst_expr(var, repl, repl_fv, taken)?),
            ),
            Formula::Not(a) => Formula::not(a.subst_expr(var, repl, repl_fv, taken)?),
            Formula::And(fs) => Formula::And(
                fs.iter()
                    .map(|f| f.subst_expr(var, repl, repl_fv, taken))
                    .collect::<Result<_, _>>()?,
            ),
            Formula::Or(fs) => Formula::Or(
                fs.iter()
                    .map(|f| f.subst_expr(var, repl, repl_fv, taken))
                    .collect::<Result<_, _>>()?,
            ),
            Formula::Implies(a, b) => Formula::implies(
                a.subst_expr(var, repl, repl_fv, taken)?,
                b.subst_expr(var, repl, repl_fv, taken)?,
            ),
            Formula::Iff(a, b) => Formula::iff(
                a.subst_expr(var, repl, repl_fv, taken)?,
                b.subst_expr(var, repl, repl_fv, taken)?,
            ),
            Formula::Quant(q, vars, body) => {
                if vars.iter().any(|(v, _)| v == var) {
                    // The substituted variable is shadowed here.
                    return Ok(self.clone());
                }
                let mut vars = vars.clone();
                let mut body = (**body).clone();
                for (v, _) in vars.iter_mut() {
                    if repl_fv.iter().any(|(n, _)| n == v) {
                        let fresh = fresh_name(v, taken);
                        taken.insert(fresh.clone());
                        let sort = body
                            .free_vars()
                            .iter()
                            .find(|(n, _)| n == v)
                            .map(|(_, s)| s.clone())
                            .unwrap_or(Sort::Int);
                        body = body
                            .substitute(v, &Subst::Expr(Formula::Var(fresh.clone(), sort)))
                            .expect("renaming with same sort");
                        *v = fresh;
                    }
                }
                Formula::Quant(*q, vars, Box::new(body.subst_expr(var, repl, repl_fv, taken)?))
            }
            Formula::RelApp { rel, term, args } => Formula::RelApp {
                rel: rel.clone(),
                term: term.clone(),
                args: args
                    .iter()
                    .map(|a| a.subst_expr(var, repl, repl_fv, taken))
                    .collect::<Result<_, _>>()?,
            },
        })
    }

    fn subst_term(&self, var: &str, te: &TermExpr) -> Formula {
        self.map_rel_apps(&mut |rel, term, args| {
            let term = match term {
                Some(TermExpr::Var(name, _)) if name == var => Some(te.clone()),
                other => other,
            };
            Formula::RelApp { rel, term, args }
        })
    }

    /// Rebuilds the formula, applying `f` to every relation application
    /// (bottom-up, args already rewritten).
    pub fn map_rel_apps(
        &self,
        f: &mut impl FnMut(RelName, Option<TermExpr>, Vec<Formula>) -> Formula,
    ) -> Formula {
        match self {
            Formula::IntConst(_) | Formula::BoolConst(_) | Formula::Var(..) => self.clone(),
            Formula::Add(a, b) => {
                Formula::Add(Box::new(a.map_rel_apps(f)), Box::new(b.map_rel_apps(f)))
            }
            Formula::Sub(a, b) => {
                Formula::Sub(Box::new(a.map_rel_apps(f)), Box::new(b.map_rel_apps(f)))
            }
            Formula::Mul(c, a) => Formula::Mul(*c, Box::new(a.map_rel_apps(f))),
            Formula::Cmp(op, a, b) => {
                Formula::Cmp(*op, Box::new(a.map_rel_apps(f)), Box::new(b.map_rel_apps(f)))
            }
            Formula::Not(a) => Formula::not(a.map_rel_apps(f)),
            Formula::And(fs) => Formula::And(fs.iter().map(|x| x.map_rel_apps(f)).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|x| x.map_rel_apps(f)).collect()),
            Formula::Implies(a, b) => Formula::implies(a.map_rel_apps(f), b.map_rel_apps(f)),
            Formula::Iff(a, b) => Formula::iff(a.map_rel_apps(f), b.map_rel_apps(f)),
            Formula::Quant(q, vars, body) => {
                Formula::Quant(*q, vars.clone(), Box::new(body.map_rel_apps(f)))
            }
            Formula::RelApp { rel, term, args } => {
                let args = args.iter().map(|a| a.map_rel_apps(f)).collect();
                f(rel.clone(), term.clone(), args)
            }
        }
    }

    /// Visits every relation application (preorder).
    pub fn for_each_rel_app(&self, f: &mut impl FnMut(&RelName, Option<&TermExpr>, &[Formula])) {
        match self {
            Formula::IntConst(_) | Formula::BoolConst(_) | Formula::Var(..) => {}
            Formula::Add(a, b)
            | Formula::Sub(a, b)
            | Formula::Cmp(_, a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b) => {
                a.for_each_rel_app(f);
                b.for_each_rel_app(f);
            }
            Formula::Mul(_, a) | Formula::Not(a) => a.for_each_rel_app(f),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|x| x.for_each_rel_app(f)),
            Formula::Quant(_, _, body) => body.for_each_rel_app(f),
            Formula::RelApp { rel, term, args } => {
                f(rel, term.as_ref(), args);
                args.iter().for_each(|a| a.for_each_rel_app(f));
            }
        }
    }

    pub fn contains_rel_apps(&self) -> bool {
        let mut found = false;
        self.for_each_rel_app(&mut |_, _, _| found = true);
        found
    }

    /// Negation normal form. Negations are pushed down to atoms; negated
    /// comparisons flip their operator; negated relation applications remain
    /// wrapped in `Not` (normalization to complement relations is a separate
    /// step). `Iff` nodes containing relation applications are expanded into
    /// the two implications first so every relation ends up under a definite
    /// polarity.
    pub fn nnf(&self) -> Formula {
        self.nnf_inner(false)
    }

    fn nnf_inner(&self, neg: bool) -> Formula {
        match self {
            Formula::BoolConst(b) => Formula::BoolConst(*b != neg),
            Formula::IntConst(_) | Formula::Add(..) | Formula::Sub(..) | Formula::Mul(..) => {
                self.clone()
            }
            Formula::Var(_, _) => {
                if neg {
                    Formula::not(self.clone())
                } else {
                    self.clone()
                }
            }
            Formula::Cmp(op, a, b) => {
                let op = if neg { op.negated() } else { *op };
                Formula::Cmp(op, a.clone(), b.clone())
            }
            Formula::Not(a) => a.nnf_inner(!neg),
            Formula::And(fs) => {
                let fs: Vec<_> = fs.iter().map(|f| f.nnf_inner(neg)).collect();
                if neg {
                    Formula::Or(fs)
                } else {
                    Formula::And(fs)
                }
            }
            Formula::Or(fs) => {
                let fs: Vec<_> = fs.iter().map(|f| f.nnf_inner(neg)).collect();
                if neg {
                    Formula::And(fs)
                } else {
                    Formula::Or(fs)
                }
            }
            Formula::Implies(a, b) => {
                if neg {
                    // ¬(a ⇒ b) = a ∧ ¬b
                    Formula::And(vec![a.nnf_inner(false), b.nnf_inner(true)])
                } else {
                    Formula::Or(vec![a.nnf_inner(true), b.nnf_inner(false)])
                }
            }
            Formula::Iff(a, b) => {
                if a.contains_rel_apps() || b.contains_rel_apps() {
                    let expanded = Formula::And(vec![
                        Formula::implies((**a).clone(), (**b).clone()),
                        Formula::implies((**b).clone(), (**a).clone()),
                    ]);
                    expanded.nnf_inner(neg)
                } else if neg {
                    // Relation-free: keep as an atom under one negation.
                    Formula::iff(a.nnf_inner(true), (**b).clone())
                } else {
                    self.clone()
                }
            }
            Formula::Quant(q, vars, body) => {
                let q = if neg { q.dual() } else { *q };
                Formula::Quant(q, vars.clone(), Box::new(body.nnf_inner(neg)))
            }
            Formula::RelApp { .. } => {
                if neg {
                    Formula::not(self.clone())
                } else {
                    self.clone()
                }
            }
        }
    }

    /// Structural equality up to renaming of bound variables.
    pub fn alpha_eq(&self, other: &Formula) -> bool {
        alpha_eq_inner(self, other, &mut Vec::new())
    }
}

fn alpha_eq_inner(a: &Formula, b: &Formula, stack: &mut Vec<(String, String)>) -> bool {
    use Formula::*;
    match (a, b) {
        (IntConst(x), IntConst(y)) => x == y,
        (BoolConst(x), BoolConst(y)) => x == y,
        (Var(x, sx), Var(y, sy)) => {
            if sx != sy {
                return false;
            }
            for (l, r) in stack.iter().rev() {
                if l == x || r == y {
                    return l == x && r == y;
                }
            }
            x == y
        }
        (Add(a1, a2), Add(b1, b2)) | (Sub(a1, a2), Sub(b1, b2)) => {
            alpha_eq_inner(a1, b1, stack) && alpha_eq_inner(a2, b2, stack)
        }
        (Mul(c1, a1), Mul(c2, b1)) => c1 == c2 && alpha_eq_inner(a1, b1, stack),
        (Cmp(o1, a1, a2), Cmp(o2, b1, b2)) => {
            o1 == o2 && alpha_eq_inner(a1, b1, stack) && alpha_eq_inner(a2, b2, stack)
        }
        (Not(a1), Not(b1)) => alpha_eq_inner(a1, b1, stack),
        (And(xs), And(ys)) | (Or(xs), Or(ys)) => {
            xs.len() == ys.len()
                && xs
                    .iter()
                    .zip(ys)
                    .all(|(x, y)| alpha_eq_inner(x, y, stack))
        }
        (Implies(a1, a2), Implies(b1, b2)) | (Iff(a1, a2), Iff(b1, b2)) => {
            alpha_eq_inner(a1, b1, stack) && alpha_eq_inner(a2, b2, stack)
        }
        (Quant(q1, v1, f1), Quant(q2, v2, f2)) => {
            if q1 != q2 || v1.len() != v2.len() {
                return false;
            }
            if v1
                .iter()
                .zip(v2)
                .any(|((_, s1), (_, s2))| s1 != s2)
            {
                return false;
            }
            let n = stack.len();
            for ((x, _), (y, _)) in v1.iter().zip(v2) {
                stack.push((x.clone(), y.clone()));
            }
            let res = alpha_eq_inner(f1, f2, stack);
            stack.truncate(n);
            res
        }
        (
            RelApp {
                rel: r1,
                term: t1,
                args: a1,
            },
            RelApp {
                rel: r2,
                term: t2,
                args: a2,
            },
        ) => {
            r1 == r2
                && t1 == t2
                && a1.len() == a2.len()
                && a1
                    .iter()
                    .zip(a2)
                    .all(|(x, y)| alpha_eq_inner(x, y, stack))
        }
        _ => false,
    }
}

/// Picks a name of the form `base!n` not present in `taken`.
pub fn fresh_name(base: &str, taken: &BTreeSet<String>) -> String {
    let stem = base.split('!').next().unwrap_or(base);
    let mut n = 1;
    loop {
        let cand = format!("{stem}!{n}");
        if !taken.contains(&cand) {
            return cand;
        }
        n += 1;
    }
}

/// Deterministic counter for fresh variable names, scoped to one encoding or
/// transformation pipeline so identical inputs yield identical output text.
#[derive(Debug, Default, Clone)]
pub struct FreshCounter(u64);

impl FreshCounter {
    pub fn new() -> FreshCounter {
        FreshCounter(0)
    }

    pub fn next(&mut self, base: &str) -> String {
        self.0 += 1;
        let stem = base.split('!').next().unwrap_or(base);
        format!("{stem}!{}", self.0)
    }
}
