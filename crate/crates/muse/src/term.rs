//! Ranked trees and typed regular tree grammars.
//!
//! Programs are terms over a ranked alphabet. A grammar assigns each symbol a
//! result nonterminal and one nonterminal per child position; membership in
//! `L(A)` is a structural check against the productions.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// A symbol of the ranked alphabet together with its type assignment: one
/// nonterminal per child position and a result nonterminal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RankedSymbol {
    pub name: String,
    pub arg_types: Vec<String>,
    pub result_type: String,
}

impl RankedSymbol {
    pub fn new(
        name: impl Into<String>,
        arg_types: Vec<String>,
        result_type: impl Into<String>,
    ) -> Self {
        RankedSymbol {
            name: name.into(),
            arg_types,
            result_type: result_type.into(),
        }
    }

    pub fn rank(&self) -> usize {
        self.arg_types.len()
    }
}

/// A ranked tree. Equality and hashing are structural; values are immutable
/// once built.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Term {
    pub symbol: RankedSymbol,
    pub children: Vec<Term>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TermError {
    #[error("symbol {symbol} has rank {rank} but was given {given} children")]
    Arity {
        symbol: String,
        rank: usize,
        given: usize,
    },
    #[error("child {index} of {symbol} must derive from {expected}, got a {actual} term")]
    ChildType {
        symbol: String,
        index: usize,
        expected: String,
        actual: String,
    },
}

impl Term {
    /// Builds a term, checking the arity and that each child's root result
    /// type matches the corresponding argument type.
    pub fn new(symbol: RankedSymbol, children: Vec<Term>) -> Result<Term, TermError> {
        if symbol.rank() != children.len() {
            return Err(TermError::Arity {
                symbol: symbol.name.clone(),
                rank: symbol.rank(),
                given: children.len(),
            });
        }
        for (i, (child, expected)) in children.iter().zip(&symbol.arg_types).enumerate() {
            if &child.symbol.result_type != expected {
                return Err(TermError::ChildType {
                    symbol: symbol.name.clone(),
                    index: i,
                    expected: expected.clone(),
                    actual: child.symbol.result_type.clone(),
                });
            }
        }
        Ok(Term { symbol, children })
    }

    pub fn leaf(symbol: RankedSymbol) -> Term {
        debug_assert_eq!(symbol.rank(), 0);
        Term {
            symbol,
            children: Vec::new(),
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Term::size).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(Term::depth).max().unwrap_or(0)
    }

    /// All subterms in preorder, root first. Repeated structure is visited
    /// once per occurrence.
    pub fn subterms(&self) -> Vec<&Term> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            out.push(t);
            for c in t.children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// Distinct subterms (structural), in order of first preorder occurrence.
    pub fn distinct_subterms(&self) -> Vec<&Term> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for t in self.subterms() {
            if seen.insert(t) {
                out.push(t);
            }
        }
        out
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.children.is_empty() {
            write!(f, "{}", self.symbol.name)
        } else {
            write!(f, "({}", self.symbol.name)?;
            for c in &self.children {
                write!(f, " {c}")?;
            }
            write!(f, ")")
        }
    }
}

/// A production `lhs -> symbol(arg_types...)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Production {
    pub lhs: String,
    pub symbol: RankedSymbol,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("unknown symbol {0}")]
    UnknownSymbol(String),
    #[error("unknown nonterminal {0}")]
    UnknownNonterminal(String),
    #[error("production for {lhs} uses undeclared nonterminal {nt}")]
    UndeclaredChild { lhs: String, nt: String },
    #[error("production {lhs} -> {symbol}: symbol result type is {result}")]
    ResultMismatch {
        lhs: String,
        symbol: String,
        result: String,
    },
    #[error("duplicate production {lhs} -> {symbol}")]
    DuplicateProduction { lhs: String, symbol: String },
}

/// A typed regular tree grammar. Types are identified with nonterminal names,
/// so the type assignment is carried by the symbols themselves.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Grammar {
    pub nonterminals: Vec<String>,
    pub productions: Vec<Production>,
}

impl Grammar {
    pub fn new(nonterminals: Vec<String>, productions: Vec<Production>) -> Grammar {
        Grammar {
            nonterminals,
            productions,
        }
    }

    pub fn has_nonterminal(&self, nt: &str) -> bool {
        self.nonterminals.iter().any(|n| n == nt)
    }

    /// Checks the type assignment. Returns a warning per nonterminal that has
    /// no production (it derives the empty language).
    pub fn validate(&self) -> Result<Vec<String>, GrammarError> {
        for p in &self.productions {
            if !self.has_nonterminal(&p.lhs) {
                return Err(GrammarError::UnknownNonterminal(p.lhs.clone()));
            }
            if p.symbol.result_type != p.lhs {
                return Err(GrammarError::ResultMismatch {
                    lhs: p.lhs.clone(),
                    symbol: p.symbol.name.clone(),
                    result: p.symbol.result_type.clone(),
                });
            }
            for nt in &p.symbol.arg_types {
                if !self.has_nonterminal(nt) {
                    return Err(GrammarError::UndeclaredChild {
                        lhs: p.lhs.clone(),
                        nt: nt.clone(),
                    });
                }
            }
        }
        let mut seen = BTreeSet::new();
        for p in &self.productions {
            if !seen.insert((p.lhs.clone(), p.symbol.name.clone())) {
                return Err(GrammarError::DuplicateProduction {
                    lhs: p.lhs.clone(),
                    symbol: p.symbol.name.clone(),
                });
            }
        }
        let mut warnings = Vec::new();
        for nt in &self.nonterminals {
            if !self.productions.iter().any(|p| &p.lhs == nt) {
                warnings.push(format!("nonterminal {nt} has no production"));
            }
        }
        Ok(warnings)
    }

    pub fn production_for(&self, lhs: &str, symbol: &str) -> Option<&Production> {
        self.productions
            .iter()
            .find(|p| p.lhs == lhs && p.symbol.name == symbol)
    }

    pub fn productions_of<'a>(&'a self, nt: &'a str) -> impl Iterator<Item = &'a Production> {
        self.productions.iter().filter(move |p| p.lhs == nt)
    }

    pub fn symbol(&self, name: &str) -> Option<&RankedSymbol> {
        self.productions
            .iter()
            .find(|p| p.symbol.name == name)
            .map(|p| &p.symbol)
    }

    /// Membership `term ∈ L(nt)`: the root must have a production for `nt`
    /// and every child must be in the language of its argument nonterminal.
    /// A symbol that occurs nowhere in the grammar is an error, not `false`.
    pub fn check_term(&self, term: &Term, nt: &str) -> Result<bool, GrammarError> {
        if !self.has_nonterminal(nt) {
            return Err(GrammarError::UnknownNonterminal(nt.to_string()));
        }
        if self.symbol(&term.symbol.name).is_none() {
            return Err(GrammarError::UnknownSymbol(term.symbol.name.clone()));
        }
        let Some(p) = self.production_for(nt, &term.symbol.name) else {
            return Ok(false);
        };
        if p.symbol.rank() != term.children.len() {
            return Ok(false);
        }
        for (child, child_nt) in term.children.iter().zip(&p.symbol.arg_types) {
            if !self.check_term(child, child_nt)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Exhaustively enumerates `L(nt)` up to the given tree depth.
    pub fn enumerate(&self, nt: &str, max_depth: usize) -> Vec<Term> {
        if max_depth == 0 {
            return Vec::new();
        }
        let mut out = Vec::new();
        for p in self.productions_of(nt) {
            let child_sets: Vec<Vec<Term>> = p
                .symbol
                .arg_types
                .iter()
                .map(|cnt| self.enumerate(cnt, max_depth - 1))
                .collect();
            if child_sets.iter().any(Vec::is_empty) && p.symbol.rank() > 0 {
                continue;
            }
            let mut combos: Vec<Vec<Term>> = vec![Vec::new()];
            for set in &child_sets {
                let mut next = Vec::new();
                for prefix in &combos {
                    for t in set {
                        let mut c = prefix.clone();
                        c.push(t.clone());
                        next.push(c);
                    }
                }
                combos = next;
            }
            for children in combos {
                out.push(Term {
                    symbol: p.symbol.clone(),
                    children,
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Grammar {
        // E -> zero | succ(E)
        Grammar::new(
            vec!["E".into()],
            vec![
                Production {
                    lhs: "E".into(),
                    symbol: RankedSymbol::new("zero", vec![], "E"),
                },
                Production {
                    lhs: "E".into(),
                    symbol: RankedSymbol::new("succ", vec!["E".into()], "E"),
                },
            ],
        )
    }

    #[test]
    fn membership_accepts_derivable_terms() {
        let g = tiny();
        let zero = Term::leaf(g.symbol("zero").unwrap().clone());
        let one = Term::new(g.symbol("succ").unwrap().clone(), vec![zero.clone()]).unwrap();
        assert!(g.check_term(&zero, "E").unwrap());
        assert!(g.check_term(&one, "E").unwrap());
    }

    #[test]
    fn membership_rejects_unknown_symbol() {
        let g = tiny();
        let alien = Term::leaf(RankedSymbol::new("alien", vec![], "E"));
        assert!(matches!(
            g.check_term(&alien, "E"),
            Err(GrammarError::UnknownSymbol(_))
        ));
    }

    #[test]
    fn enumeration_counts_match_depth() {
        let g = tiny();
        // depth 1: zero; depth 2: zero, succ(zero); depth 3 adds succ(succ(zero))
        assert_eq!(g.enumerate("E", 1).len(), 1);
        assert_eq!(g.enumerate("E", 2).len(), 2);
        assert_eq!(g.enumerate("E", 3).len(), 3);
    }

    #[test]
    fn enumeration_agrees_with_membership() {
        let g = tiny();
        for t in g.enumerate("E", 4) {
            assert!(g.check_term(&t, "E").unwrap(), "{t} should be in L(E)");
        }
    }

    #[test]
    fn distinct_subterms_dedupe_shared_structure() {
        let g = tiny();
        let zero = Term::leaf(g.symbol("zero").unwrap().clone());
        let s = g.symbol("succ").unwrap().clone();
        let one = Term::new(s.clone(), vec![zero.clone()]).unwrap();
        // succ(succ(zero)) has 3 distinct subterms
        let two = Term::new(s, vec![one]).unwrap();
        assert_eq!(two.subterms().len(), 3);
        assert_eq!(two.distinct_subterms().len(), 3);
    }
}
