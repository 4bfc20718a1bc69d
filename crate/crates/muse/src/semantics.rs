//! Semantic relations, rules, problems and solutions.
//!
//! A semantics maps every (relation, production) pair to exactly one rule
//! whose body may apply relations to the rule's own term parameter or to a
//! child term parameter. Disjunction inside a body recovers the effect of
//! multiple rules per production.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::formula::{Formula, Sort, Subst, TermExpr};
use crate::term::{Grammar, Term};

/// An uninterpreted relation attached to a nonterminal. Besides the implicit
/// term parameter it carries state parameters and one output parameter, all
/// of sort `Int` or `Bool`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticRelation {
    pub name: String,
    pub nonterminal: String,
    /// Name of the relation's own term variable inside rule bodies.
    pub term_param: String,
    pub state_params: Vec<(String, Sort)>,
    pub output_param: (String, Sort),
}

impl SemanticRelation {
    /// State parameters followed by the output parameter.
    pub fn params(&self) -> Vec<(String, Sort)> {
        let mut out = self.state_params.clone();
        out.push(self.output_param.clone());
        out
    }

    pub fn arity(&self) -> usize {
        self.state_params.len() + 1
    }
}

/// The unique rule for one (relation, production) pair. `child_term_params`
/// names the child subterms of the production, positionally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticRule {
    pub relation: String,
    pub lhs: String,
    pub symbol: String,
    pub child_term_params: Vec<String>,
    pub body: Formula,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticsError {
    #[error("no rule for relation {relation} and production {lhs} -> {symbol}")]
    MissingRule {
        relation: String,
        lhs: String,
        symbol: String,
    },
    #[error("unknown relation {0}")]
    UnknownRelation(String),
    #[error("relation order must list every relation exactly once (problem near {0})")]
    BadOrder(String),
    #[error("duplicate relation name {0}")]
    DuplicateRelation(String),
}

/// An ordered set of semantic relations plus one rule per (relation,
/// production) pair. The order fixes how nested fixed points are evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Semantics {
    pub relations: Vec<SemanticRelation>,
    /// Strict total order over relation names, outermost first.
    pub order: Vec<String>,
    /// Keyed by (relation name, production symbol name).
    pub rules: BTreeMap<(String, String), SemanticRule>,
}

impl Semantics {
    pub fn relation(&self, name: &str) -> Option<&SemanticRelation> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn relations_of<'a>(
        &'a self,
        nonterminal: &'a str,
    ) -> impl Iterator<Item = &'a SemanticRelation> {
        self.relations
            .iter()
            .filter(move |r| r.nonterminal == nonterminal)
    }

    /// Position in the evaluation order; lower is outermost.
    pub fn order_index(&self, name: &str) -> usize {
        self.order
            .iter()
            .position(|n| n == name)
            .unwrap_or(usize::MAX)
    }

    /// The unique rule for a relation and the production identified by its
    /// symbol. Missing pairs are an error.
    pub fn rule_of(&self, relation: &str, symbol: &str) -> Result<&SemanticRule, SemanticsError> {
        let rel = self
            .relation(relation)
            .ok_or_else(|| SemanticsError::UnknownRelation(relation.to_string()))?;
        self.rules
            .get(&(relation.to_string(), symbol.to_string()))
            .ok_or_else(|| SemanticsError::MissingRule {
                relation: relation.to_string(),
                lhs: rel.nonterminal.clone(),
                symbol: symbol.to_string(),
            })
    }

    /// Checks relation-name uniqueness, order totality, and that every
    /// (relation, production) pair has exactly one rule.
    pub fn validate(&self, grammar: &Grammar) -> Result<(), SemanticsError> {
        let mut names = BTreeSet::new();
        for r in &self.relations {
            if !names.insert(r.name.clone()) {
                return Err(SemanticsError::DuplicateRelation(r.name.clone()));
            }
        }
        if self.order.len() != self.relations.len() {
            return Err(SemanticsError::BadOrder(format!(
                "{} ordered, {} declared",
                self.order.len(),
                self.relations.len()
            )));
        }
        for n in &self.order {
            if !names.contains(n) {
                return Err(SemanticsError::BadOrder(n.clone()));
            }
        }
        let order_set: BTreeSet<_> = self.order.iter().collect();
        if order_set.len() != self.order.len() {
            return Err(SemanticsError::BadOrder("repeated name".to_string()));
        }
        for r in &self.relations {
            for p in grammar.productions_of(&r.nonterminal) {
                self.rule_of(&r.name, &p.symbol.name)?;
            }
        }
        Ok(())
    }
}

/// A verification problem: grammar, semantics, synthesis functions and the
/// specification whose free variables are exactly the synthesis functions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub grammar: Grammar,
    pub semantics: Semantics,
    /// (function name, root nonterminal) pairs.
    pub synth_funs: Vec<(String, String)>,
    pub spec: Formula,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolutionError {
    #[error("missing binding for {0}")]
    Missing(String),
    #[error("binding for unknown synthesis function {0}")]
    Unknown(String),
    #[error("term bound to {fun} is not in L({nonterminal})")]
    NotInLanguage { fun: String, nonterminal: String },
    #[error(transparent)]
    Grammar(#[from] crate::term::GrammarError),
}

/// Binds every synthesis function to a term of its nonterminal's language.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Solution {
    pub bindings: BTreeMap<String, Term>,
}

impl Solution {
    pub fn single(fun: impl Into<String>, term: Term) -> Solution {
        let mut bindings = BTreeMap::new();
        bindings.insert(fun.into(), term);
        Solution { bindings }
    }

    pub fn term_for(&self, fun: &str) -> Option<&Term> {
        self.bindings.get(fun)
    }
}

impl Problem {
    /// Checks that the solution binds every synthesis function to a term in
    /// the right language, with no extraneous bindings.
    pub fn validate_solution(&self, solution: &Solution) -> Result<(), SolutionError> {
        for (fun, nt) in &self.synth_funs {
            let term = solution
                .term_for(fun)
                .ok_or_else(|| SolutionError::Missing(fun.clone()))?;
            if !self.grammar.check_term(term, nt)? {
                return Err(SolutionError::NotInLanguage {
                    fun: fun.clone(),
                    nonterminal: nt.clone(),
                });
            }
        }
        for fun in solution.bindings.keys() {
            if !self.synth_funs.iter().any(|(f, _)| f == fun) {
                return Err(SolutionError::Unknown(fun.clone()));
            }
        }
        Ok(())
    }

    /// The specification with every synthesis function replaced by its bound
    /// term.
    pub fn substituted_spec(&self, solution: &Solution) -> Result<Formula, SolutionError> {
        self.validate_solution(solution)?;
        let mut spec = self.spec.clone();
        for (fun, _) in &self.synth_funs {
            let term = solution.term_for(fun).expect("validated above");
            spec = spec
                .substitute(fun, &Subst::Term(TermExpr::Const(term.clone())))
                .expect("term substitution is total");
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fix {
    Mu,
    Nu,
}

impl Fix {
    pub fn dual(self) -> Fix {
        match self {
            Fix::Mu => Fix::Nu,
            Fix::Nu => Fix::Mu,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Fix::Mu => "=mu",
            Fix::Nu => "=nu",
        }
    }
}

/// One equation of a fixed-point equation system. Bodies must contain only
/// positive occurrences of equation relation names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixpointEquation {
    pub name: String,
    pub fix: Fix,
    pub params: Vec<(String, Sort)>,
    pub body: Formula,
}

/// Three-valued outcome of a verification query. `Valid`/`Invalid` are only
/// produced by a backend or the finite-domain oracle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid,
    Unknown(String),
    Timeout,
}

impl Verdict {
    pub fn is_definitive(&self) -> bool {
        matches!(self, Verdict::Valid | Verdict::Invalid)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Valid => write!(f, "valid"),
            Verdict::Invalid => write!(f, "invalid"),
            Verdict::Unknown(reason) => write!(f, "unknown ({reason})"),
            Verdict::Timeout => write!(f, "timeout"),
        }
    }
}
