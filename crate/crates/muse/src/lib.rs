//! A verifier for semantics-guided synthesis problems whose semantics are
//! given as ordered fixed-point rules.
//!
//! Given a grammar, a semantics (one rule per relation and production, with
//! negation and ordered evaluation), a logical specification and a candidate
//! program, this crate classifies the verification query, optimizes it,
//! encodes it for an SMT, Horn-clause, co-Horn or fixed-point backend,
//! dispatches it to external solver processes, and returns a verdict. An
//! exact finite-domain oracle doubles as the reference implementation.
//!
//! The narrative guide lives in `book/` and is embedded (and doc-tested)
//! under [`guide`].

pub mod adapter;
pub mod analysis;
pub mod encode;
pub mod formula;
pub mod frontend;
pub mod oracle;
pub mod semantics;
pub mod solve;
pub mod term;
pub mod transform;

#[rustfmt::skip]
pub mod guide;

pub use analysis::{classify, Backend, Classification, Polarity};
pub use formula::{CmpOp, Formula, Quantifier, RelName, Sort, TermExpr};
pub use semantics::{
    Fix, FixpointEquation, Problem, SemanticRelation, SemanticRule, Semantics, Solution, Verdict,
};
pub use term::{Grammar, Production, RankedSymbol, Term};
