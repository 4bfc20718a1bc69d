//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (run with `--nocapture` to see them). Backend legs run through real
//! subprocesses using the reference adapters unless `MUSE_SOLVER_CONFIG`
//! points at an external solver setup.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use muse::analysis::{self, Backend, SplitResult};
use muse::encode::{self, DualOrder, EncodeError};
use muse::formula::{Formula, FreshCounter, Quantifier, RelName, Sort, TermExpr};
use muse::oracle::{
    self, bounded_derivation, bounded_derivation_in, eval_closed, eval_system, FiniteDomain,
    Interpretation, Value,
};
use muse::semantics::{Fix, FixpointEquation, Problem, Solution, Verdict};
use muse::solve::{self, SolverSuite, VerifyOptions};
use muse::term::{Grammar, Term};
use muse::transform;

fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn load(problem: &str, solution: &str) -> (Problem, Solution) {
    let p = muse::frontend::parse_problem(&fixture(problem), problem)
        .unwrap_or_else(|d| panic!("{problem}: {d:?}"))
        .problem;
    let s = muse::frontend::parse_solution(&fixture(solution), solution, &p)
        .unwrap_or_else(|d| panic!("{solution}: {d:?}"));
    (p, s)
}

fn dom(lo: i64, hi: i64) -> FiniteDomain {
    FiniteDomain::new(lo, hi).unwrap()
}

/// Reference-adapter solver suite over the muse binary itself, with the
/// given oracle domains per backend kind. `MUSE_SOLVER_CONFIG` overrides.
fn adapter_suite(smt_dom: &str, horn_dom: &str, muclp_dom: &str) -> SolverSuite {
    if let Ok(path) = std::env::var(solve::CONFIG_ENV_VAR) {
        return SolverSuite::from_path(std::path::Path::new(&path)).expect("external config");
    }
    let bin = env!("CARGO_BIN_EXE_muse");
    let toml = format!(
        r#"
[backend.ref-smt]
kind = "smt"
cmd = "{bin}"
args = ["solve-smt", "{{file}}", "--domain", "{smt_dom}"]
valid_regex = "^unsat"
invalid_regex = "^sat"
timeout_s = 60

[backend.ref-horn]
kind = "horn"
cmd = "{bin}"
args = ["solve-horn", "{{file}}", "--domain", "{horn_dom}"]
valid_regex = "^sat"
invalid_regex = "^unsat"
timeout_s = 60

[backend.ref-muclp]
kind = "muclp"
cmd = "{bin}"
args = ["solve-muclp", "{{file}}", "--domain", "{muclp_dom}"]
valid_regex = "^valid"
invalid_regex = "^invalid"
timeout_s = 60
"#
    );
    SolverSuite::from_str(&toml).expect("adapter config")
}

fn report(criterion: &str, outcome: Result<String, String>) {
    match outcome {
        Ok(msg) => println!("[acceptance] {criterion}: PASS — {msg}"),
        Err(msg) => {
            println!("[acceptance] {criterion}: FAIL — {msg}");
            panic!("{criterion} failed: {msg}");
        }
    }
}

fn check(cond: bool, msg: &str, errs: &mut Vec<String>) {
    if !cond {
        errs.push(msg.to_string());
    }
}

fn finish(errs: Vec<String>, ok_msg: String) -> Result<String, String> {
    if errs.is_empty() {
        Ok(ok_msg)
    } else {
        Err(errs.join("; "))
    }
}

// ---------------------------------------------------------------------------
// Criterion 1: max2 through quantified SMT
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_max2_smt() {
    let mut errs = Vec::new();
    let started = Instant::now();
    let suite = adapter_suite("-4..4", "0..6", "0..6");
    let options = VerifyOptions::default();

    let (p, good) = load("max2.sem", "max2.sol");
    let run = solve::verify(&p, &good, &suite, &options).expect("verify runs");
    check(
        run.verdict == Verdict::Valid,
        &format!("solver leg expected valid, got {}", run.verdict),
        &mut errs,
    );
    check(
        run.encoding == Some(encode::QueryKind::Smt),
        "max2 should go through the SMT encoding",
        &mut errs,
    );
    let good_elapsed = started.elapsed();

    let second = Instant::now();
    let (_, bad) = load("max2.sem", "max2_bad.sol");
    let run = solve::verify(&p, &bad, &suite, &options).expect("verify runs");
    check(
        run.verdict == Verdict::Invalid,
        &format!("mutated candidate expected invalid, got {}", run.verdict),
        &mut errs,
    );
    let bad_elapsed = second.elapsed();

    let d = dom(-4, 4);
    check(
        oracle::oracle_verify(&p, &good, &d).unwrap() == Verdict::Valid,
        "oracle disagrees on the valid candidate",
        &mut errs,
    );
    check(
        oracle::oracle_verify(&p, &bad, &d).unwrap() == Verdict::Invalid,
        "oracle disagrees on the mutant",
        &mut errs,
    );
    check(
        good_elapsed < Duration::from_secs(5) && bad_elapsed < Duration::from_secs(5),
        &format!("runtime bound exceeded: {good_elapsed:?} / {bad_elapsed:?}"),
        &mut errs,
    );
    report(
        "criterion 1 (max2 via quantified SMT)",
        finish(
            errs,
            format!("valid/invalid verdicts reproduced in {good_elapsed:?}/{bad_elapsed:?}"),
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: doubleViaLoop through Horn clauses and fixed points
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_loop_chc_and_muclp() {
    let mut errs = Vec::new();
    let suite = adapter_suite("-4..4", "0..6", "0..6");
    let backend_start = Instant::now();

    let (p, s) = load("loop.sem", "loop.sol");
    let run = solve::verify(&p, &s, &suite, &VerifyOptions::default()).expect("verify runs");
    check(
        run.verdict == Verdict::Valid && run.encoding == Some(encode::QueryKind::Chc),
        &format!(
            "partial correctness: expected valid via chc, got {} via {:?}",
            run.verdict, run.encoding
        ),
        &mut errs,
    );

    let (pt, st) = load("loop_tot.sem", "loop.sol");
    let run = solve::verify(
        &pt,
        &st,
        &suite,
        &VerifyOptions {
            backend: Some(Backend::Muclp),
            ..VerifyOptions::default()
        },
    )
    .expect("verify runs");
    check(
        run.verdict == Verdict::Valid,
        &format!("total correctness via muclp backend: got {}", run.verdict),
        &mut errs,
    );
    let backend_elapsed = backend_start.elapsed();

    let oracle_start = Instant::now();
    let d = dom(0, 6);
    check(
        oracle::oracle_verify(&p, &s, &d).unwrap() == Verdict::Valid,
        "oracle rejects partial correctness",
        &mut errs,
    );
    check(
        oracle::oracle_verify(&pt, &st, &d).unwrap() == Verdict::Valid,
        "oracle rejects total correctness",
        &mut errs,
    );
    // The total-correctness goal, checked independently by derivation search:
    // for every in-domain x, Sem_L(s_loop, x, 0, 0, 2x) has a finite proof.
    let t = s.term_for("f_loop").unwrap();
    for x in 0..=3i64 {
        let args = vec![Value::Int(x), Value::Int(0), Value::Int(0), Value::Int(2 * x)];
        let ok = bounded_derivation(&p, "Sem_L", t, &args, 20).unwrap();
        check(
            ok,
            &format!("no derivation of height <= 20 for x = {x}"),
            &mut errs,
        );
    }
    let oracle_elapsed = oracle_start.elapsed();
    check(
        backend_elapsed < Duration::from_secs(60),
        &format!("backend legs took {backend_elapsed:?}"),
        &mut errs,
    );
    check(
        oracle_elapsed < Duration::from_secs(5),
        &format!("oracle legs took {oracle_elapsed:?}"),
        &mut errs,
    );
    report(
        "criterion 2 (doubleViaLoop via CHC + fixed points)",
        finish(
            errs,
            format!("backends {backend_elapsed:?}, oracle {oracle_elapsed:?}"),
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: specification splitting
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_specification_splitting() {
    let mut errs = Vec::new();
    let (p_both, s) = load("loop_both.sem", "loop.sol");
    let (p_tot, _) = load("loop_tot.sem", "loop.sol");
    let (p_loop, _) = load("loop.sem", "loop.sol");

    match analysis::split_specification(&p_both.spec) {
        SplitResult::Split { positive, negative } => {
            check(
                positive.alpha_eq(&p_tot.spec),
                "positive half is not alpha-equivalent to the total-correctness spec",
                &mut errs,
            );
            check(
                negative.alpha_eq(&p_loop.spec),
                "negative half is not alpha-equivalent to the partial-correctness spec",
                &mut errs,
            );
        }
        SplitResult::NotSplittable => errs.push("specification did not split".into()),
    }

    let classification = analysis::classify(&p_both, &s);
    check(
        classification.recommended == Backend::Split,
        &format!("expected a split classification, got {}", classification.recommended),
        &mut errs,
    );
    let suite = adapter_suite("-4..4", "0..6", "0..6");
    let run = solve::verify(&p_both, &s, &suite, &VerifyOptions::default()).expect("verify");
    check(
        run.verdict == Verdict::Valid,
        &format!("split verdict expected valid, got {}", run.verdict),
        &mut errs,
    );
    report(
        "criterion 3 (specification splitting)",
        finish(errs, "split halves match and combine to valid".to_string()),
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: hyperproperty through the combined system
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_hyperproperty() {
    let mut errs = Vec::new();
    let (p, s) = load("loop_comm.sem", "plus.sol");
    let q = encode::muclp_of(&p, &s, DualOrder::default()).expect("encode");
    let has_plain = q.equations.iter().any(|e| e.base == "Sem_L" && !e.complement);
    let has_compl = q.equations.iter().any(|e| e.base == "Sem_L" && e.complement);
    check(
        has_plain && has_compl,
        "system must combine the semantics with its dual",
        &mut errs,
    );
    // Goal shape: ∀ x y xp yp. Sem_L~(s, x, y, xp, yp) ∨ Sem_L(s, y, x, xp, yp)
    let goal_ok = match &q.goal {
        Formula::Quant(Quantifier::Forall, vars, body) if vars.len() == 4 => match &**body {
            Formula::Or(parts) if parts.len() == 2 => {
                match (&parts[0], &parts[1]) {
                    (
                        Formula::RelApp { rel: r1, args: a1, .. },
                        Formula::RelApp { rel: r2, args: a2, .. },
                    ) => {
                        let swapped = a1.len() == 4
                            && a2.len() == 4
                            && a1[0] == a2[1]
                            && a1[1] == a2[0]
                            && a1[2] == a2[2]
                            && a1[3] == a2[3];
                        r1.base == "Sem_L" && r1.complement && r2.base == "Sem_L"
                            && !r2.complement
                            && swapped
                    }
                    _ => false,
                }
            }
            _ => false,
        },
        _ => false,
    };
    check(goal_ok, "goal does not match the dual-or-swapped shape", &mut errs);
    check(
        oracle::oracle_verify(&p, &s, &dom(0, 4)).unwrap() == Verdict::Valid,
        "oracle rejects commutativity of the addition loop",
        &mut errs,
    );
    report(
        "criterion 4 (hyperproperty)",
        finish(errs, "combined dual system and valid verdict".to_string()),
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: the patrol game
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_buchi_game() {
    let mut errs = Vec::new();
    let (p, strat) = load("buchi.sem", "buchi.sol");
    let (_, stay) = load("buchi.sem", "buchi_stay.sol");

    let c = analysis::classify(&p, &strat);
    check(
        c.recommended == Backend::Muclp && !c.chc_like,
        &format!(
            "expected a non-CHC-like fixed-point classification, got {} (chc_like={})",
            c.recommended, c.chc_like
        ),
        &mut errs,
    );

    let d = dom(-1, 6);
    let run = oracle::oracle_verify_full(&p, &strat, &d).unwrap();
    check(
        run.verdict == Verdict::Valid,
        "patrol strategy should win the game",
        &mut errs,
    );
    // The goal is the complement relation at (0, 0); confirm it directly.
    let root = run
        .equations
        .iter()
        .find(|e| e.name.starts_with("Sem_Buchi~"))
        .map(|e| e.name.clone());
    match root {
        Some(name) => check(
            run.interpretation
                .holds(&name, &[Value::Int(0), Value::Int(0)]),
            "complement relation does not hold at the origin",
            &mut errs,
        ),
        None => errs.push("no complement equation for the game relation".into()),
    }
    check(
        oracle::oracle_verify(&p, &stay, &d).unwrap() == Verdict::Invalid,
        "the constant strategy should lose the game",
        &mut errs,
    );

    // Byte-stable emission against the committed golden file.
    let emit = || {
        let q = encode::muclp_of(&p, &strat, DualOrder::default()).unwrap();
        let q = encode::reify_query(&q);
        let mut fresh = FreshCounter::new();
        let q = encode::inline_query(&q, &mut fresh);
        encode::emit_muclp(&q).unwrap()
    };
    let text = emit();
    check(text == emit(), "emission is not deterministic", &mut errs);
    let golden_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/buchi.muclp");
    let golden = std::fs::read_to_string(&golden_path).expect("golden file");
    check(
        text == golden,
        "emitted script differs from the committed golden file",
        &mut errs,
    );
    report(
        "criterion 5 (patrol game)",
        finish(errs, "classification, verdicts, and golden emission hold".to_string()),
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: evaluation order of mutually negated relations
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_evaluation_order() {
    let mut errs = Vec::new();
    let x = || Formula::var("x", Sort::Int);
    let app = |name: &str| Formula::RelApp {
        rel: RelName::plain(name),
        term: None,
        args: vec![x()],
    };
    let a = FixpointEquation {
        name: "Sem_A".into(),
        fix: Fix::Mu,
        params: vec![("x".into(), Sort::Int)],
        body: Formula::Or(vec![app("Sem_A"), app("Sem_B~")]),
    };
    let b_bar = FixpointEquation {
        name: "Sem_B~".into(),
        fix: Fix::Nu,
        params: vec![("x".into(), Sort::Int)],
        body: Formula::And(vec![app("Sem_B~"), app("Sem_A")]),
    };
    let d = dom(-3, 3);
    let first = eval_system(&[a.clone(), b_bar.clone()], &d).unwrap();
    check(
        first.relations["Sem_A"].is_empty(),
        "with the relation first, its fixed point must be empty",
        &mut errs,
    );
    let second = eval_system(&[b_bar, a], &d).unwrap();
    check(
        second.relations["Sem_A"].len() == d.size(),
        "with the dual first, the fixed point must be the whole interval",
        &mut errs,
    );

    // The same example through the full pipeline, from the fixture files.
    let (p_ab, u) = load("order_ab.sem", "order.sol");
    let (p_ba, _) = load("order_ba.sem", "order.sol");
    check(
        oracle::oracle_verify(&p_ab, &u, &d).unwrap() == Verdict::Invalid,
        "goal should be false under the (A, B~) order",
        &mut errs,
    );
    check(
        oracle::oracle_verify(&p_ba, &u, &d).unwrap() == Verdict::Valid,
        "goal should be true under the (B~, A) order",
        &mut errs,
    );
    report(
        "criterion 6 (evaluation order)",
        finish(errs, "both stated outcomes reproduced exactly".to_string()),
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: randomized theorem suites
// ---------------------------------------------------------------------------

/// Samples a term of the grammar within a node budget.
fn sample_term(g: &Grammar, nt: &str, budget: usize, rng: &mut StdRng) -> Option<Term> {
    let prods: Vec<_> = g.productions_of(nt).collect();
    if prods.is_empty() {
        return None;
    }
    for _ in 0..16 {
        let leafs: Vec<_> = prods.iter().filter(|p| p.symbol.rank() == 0).collect();
        let pick = if budget <= 1 && !leafs.is_empty() {
            *leafs[rng.gen_range(0..leafs.len())]
        } else {
            prods[rng.gen_range(0..prods.len())]
        };
        if pick.symbol.rank() == 0 {
            return Some(Term::leaf(pick.symbol.clone()));
        }
        if budget <= pick.symbol.rank() {
            continue;
        }
        let child_budget = (budget - 1) / pick.symbol.rank();
        let mut children = Vec::new();
        let mut ok = true;
        for cnt in &pick.symbol.arg_types {
            match sample_term(g, cnt, child_budget.max(1), rng) {
                Some(c) => children.push(c),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            if let Ok(t) = Term::new(pick.symbol.clone(), children) {
                if t.size() <= budget.max(1) {
                    return Some(t);
                }
            }
        }
    }
    None
}

#[test]
fn criterion_7a_smt_agrees_with_oracle() {
    let mut errs = Vec::new();
    let started = Instant::now();
    let (p, _) = load("max2.sem", "max2.sol");
    let mut rng = StdRng::seed_from_u64(7);
    let d = dom(-2, 2);
    let mut cases = 0;
    while cases < 200 {
        let Some(t) = sample_term(&p.grammar, "S", 7, &mut rng) else {
            continue;
        };
        cases += 1;
        let solution = Solution::single("max2", t.clone());
        let mut fresh = FreshCounter::new();
        let q = encode::smt_formula_of(&p, &solution, &mut fresh).expect("non-recursive");
        let smt_verdict = if eval_closed(&q.goal, &Interpretation::default(), &d) {
            Verdict::Valid
        } else {
            Verdict::Invalid
        };
        let oracle_verdict = oracle::oracle_verify(&p, &solution, &d).unwrap();
        if smt_verdict != oracle_verdict {
            errs.push(format!(
                "divergence on {t}: smt says {smt_verdict}, oracle says {oracle_verdict}"
            ));
            break;
        }
    }
    report(
        "criterion 7a (expansion agrees with the oracle)",
        finish(errs, format!("{cases} candidates in {:?}", started.elapsed())),
    );
}

/// Least-solution tuple set of the root (relation, term) pair computed from
/// the Horn-clause route.
fn clause_route_root_tuples(
    p: &Problem,
    rel: &str,
    t: &Term,
    d: &FiniteDomain,
) -> BTreeSet<Vec<Value>> {
    let mut fresh = FreshCounter::new();
    let mut namer = transform::ReifyNamer::new();
    let root = namer.name(rel, false, t);
    let mut queue = vec![(rel.to_string(), t.clone())];
    let mut seen: BTreeSet<(String, Term)> = queue.iter().cloned().collect();
    let mut equations: Vec<FixpointEquation> = Vec::new();
    while let Some((r, term)) = queue.pop() {
        let clauses = transform::rules_of(&p.semantics, &r, &term, &mut fresh).expect("horn");
        for c in &clauses {
            c.body.for_each_rel_app(&mut |r2, te, _| {
                if let Some(TermExpr::Const(t2)) = te {
                    let key = (r2.base.clone(), t2.clone());
                    if seen.insert(key.clone()) {
                        queue.push(key);
                    }
                }
            });
        }
        let name = namer.name(&r, false, &term);
        let params = clauses
            .first()
            .map(|c| c.params.clone())
            .unwrap_or_default();
        let body = transform::clauses_to_body(&clauses);
        let mut discovered = Vec::new();
        let body = transform::reify_body(&body, &mut namer, &mut discovered);
        equations.push(FixpointEquation {
            name,
            fix: Fix::Mu,
            params,
            body,
        });
    }
    let interp = eval_system(&equations, d).expect("clause system evaluates");
    interp.relations[&root].clone()
}

fn reified_root_tuples(p: &Problem, rel: &str, t: &Term, d: &FiniteDomain) -> BTreeSet<Vec<Value>> {
    let set = transform::reify(&p.semantics, rel, t).expect("reify");
    let eqs: Vec<FixpointEquation> = set
        .rules
        .iter()
        .map(|r| FixpointEquation {
            name: r.name.clone(),
            fix: Fix::Mu,
            params: r.params.clone(),
            body: r.body.clone(),
        })
        .collect();
    let interp = eval_system(&eqs, d).expect("reified system evaluates");
    interp.relations[&set.root].clone()
}

#[test]
fn criterion_7b_clause_sets_match_rules() {
    let mut errs = Vec::new();
    let started = Instant::now();
    let (p, _) = load("loop.sem", "loop.sol");
    let mut rng = StdRng::seed_from_u64(11);
    let d = dom(-2, 2);
    let mut cases = 0;
    while cases < 200 {
        let Some(t) = sample_term(&p.grammar, "S", 6, &mut rng) else {
            continue;
        };
        cases += 1;
        let via_clauses = clause_route_root_tuples(&p, "Sem_S", &t, &d);
        let via_rules = reified_root_tuples(&p, "Sem_S", &t, &d);
        if via_clauses != via_rules {
            errs.push(format!("clause/rule divergence on {t}"));
            break;
        }
    }
    report(
        "criterion 7b (clause sets equivalent to rules)",
        finish(errs, format!("{cases} programs in {:?}", started.elapsed())),
    );
}

#[test]
fn criterion_7c_reified_agrees_with_derivations() {
    let mut errs = Vec::new();
    let started = Instant::now();
    let (p, _) = load("loop.sem", "loop.sol");
    let mut rng = StdRng::seed_from_u64(13);
    let d = dom(-3, 3);
    let mut cases = 0;
    let mut tuples_checked = 0usize;
    while cases < 200 {
        let Some(t) = sample_term(&p.grammar, "S", 6, &mut rng) else {
            continue;
        };
        cases += 1;
        let reified = reified_root_tuples(&p, "Sem_S", &t, &d);
        // Derivations with witnesses confined to the domain coincide with
        // the domain-bounded least fixed point.
        let depth = 2 * t.size() + 4;
        let mut space = Vec::new();
        for x in d.values() {
            for y in d.values() {
                space.push((x, y));
            }
        }
        for (x, y) in &space {
            for xp in d.values() {
                for yp in d.values() {
                    let tuple = vec![
                        Value::Int(*x),
                        Value::Int(*y),
                        Value::Int(xp),
                        Value::Int(yp),
                    ];
                    let derived =
                        bounded_derivation_in(&p, "Sem_S", &t, &tuple, depth, &d).unwrap();
                    tuples_checked += 1;
                    if derived != reified.contains(&tuple) {
                        errs.push(format!(
                            "on {t}: tuple ({x},{y},{xp},{yp}) derived={derived}, reified={}",
                            reified.contains(&tuple)
                        ));
                        return report(
                            "criterion 7c (reified matches original semantics)",
                            finish(errs, String::new()),
                        );
                    }
                }
            }
        }
    }
    report(
        "criterion 7c (reified matches original semantics)",
        finish(
            errs,
            format!(
                "{cases} programs, {tuples_checked} tuples in {:?}",
                started.elapsed()
            ),
        ),
    );
}

#[test]
fn criterion_7d_inline_and_qe_preserve_verdicts() {
    let mut errs = Vec::new();
    let started = Instant::now();
    let (p, _) = load("loop.sem", "loop.sol");
    let mut rng = StdRng::seed_from_u64(17);
    let d = dom(-2, 2);
    let mut cases = 0;
    while cases < 200 {
        let Some(t) = sample_term(&p.grammar, "S", 6, &mut rng) else {
            continue;
        };
        cases += 1;
        let set = transform::reify(&p.semantics, "Sem_S", &t).expect("reify");
        let base = reified_root_tuples(&p, "Sem_S", &t, &d);

        let mut fresh = FreshCounter::new();
        let inlined = transform::inline(&set, &mut fresh);
        let eval_set = |rules: &[transform::ReifiedRule]| {
            let eqs: Vec<FixpointEquation> = rules
                .iter()
                .map(|r| FixpointEquation {
                    name: r.name.clone(),
                    fix: Fix::Mu,
                    params: r.params.clone(),
                    body: transform::eliminate_quantifiers(&r.body),
                })
                .collect();
            eval_system(&eqs, &d).expect("evaluates").relations[&set.root].clone()
        };
        let inlined_tuples = eval_set(&inlined.rules);
        if inlined_tuples != base {
            errs.push(format!("inline changed the semantics of {t}"));
            break;
        }
        // Quantifier elimination on the original bodies.
        let qe_rules: Vec<transform::ReifiedRule> = set
            .rules
            .iter()
            .map(|r| transform::ReifiedRule {
                body: transform::eliminate_quantifiers(&r.body),
                ..r.clone()
            })
            .collect();
        let qe_tuples = eval_set(&qe_rules);
        if qe_tuples != base {
            errs.push(format!("quantifier elimination changed the semantics of {t}"));
            break;
        }
    }
    report(
        "criterion 7d (inline and QE preserve verdicts)",
        finish(errs, format!("{cases} programs in {:?}", started.elapsed())),
    );
}

/// Random formula over one unary relation and integer variables x, y.
fn sample_formula(depth: usize, rng: &mut StdRng) -> Formula {
    let x = || Formula::var("x", Sort::Int);
    let y = || Formula::var("y", Sort::Int);
    let atom = |rng: &mut StdRng| -> Formula {
        match rng.gen_range(0..4) {
            0 => Formula::cmp(muse::CmpOp::Lt, x(), y()),
            1 => Formula::eq(x(), Formula::int(rng.gen_range(-2..3))),
            2 => Formula::BoolConst(rng.gen_bool(0.5)),
            _ => Formula::RelApp {
                rel: RelName::plain("X"),
                term: None,
                args: vec![x()],
            },
        }
    };
    if depth == 0 {
        return atom(rng);
    }
    match rng.gen_range(0..7) {
        0 => Formula::not(sample_formula(depth - 1, rng)),
        1 => Formula::And(vec![
            sample_formula(depth - 1, rng),
            sample_formula(depth - 1, rng),
        ]),
        2 => Formula::Or(vec![
            sample_formula(depth - 1, rng),
            sample_formula(depth - 1, rng),
        ]),
        3 => Formula::implies(sample_formula(depth - 1, rng), sample_formula(depth - 1, rng)),
        4 => Formula::iff(sample_formula(depth - 1, rng), sample_formula(depth - 1, rng)),
        5 => Formula::forall(vec![("y".into(), Sort::Int)], sample_formula(depth - 1, rng)),
        _ => Formula::exists(vec![("y".into(), Sort::Int)], sample_formula(depth - 1, rng)),
    }
}

#[test]
fn criterion_7e_norm_and_dual_laws() {
    let mut errs = Vec::new();
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(23);
    for case in 0..200 {
        let f = sample_formula(4, &mut rng);
        let normed = transform::norm(&f);
        if !transform::only_positive_rels(&normed) {
            errs.push(format!("case {case}: norm left a negative occurrence"));
            break;
        }
        let eq = FixpointEquation {
            name: "X".into(),
            fix: if rng.gen_bool(0.5) { Fix::Mu } else { Fix::Nu },
            params: vec![("x".into(), Sort::Int)],
            body: f,
        };
        let dd = transform::dual_equation(&transform::dual_equation(&eq));
        if dd.name != eq.name || dd.fix != eq.fix || dd.body != transform::norm(&eq.body) {
            errs.push(format!("case {case}: double dual is not the normalized original"));
            break;
        }
    }
    report(
        "criterion 7e (normalization and duality laws)",
        finish(errs, format!("200 formulas in {:?}", started.elapsed())),
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: reification is the enabling optimization
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_reification_ablation() {
    let mut errs = Vec::new();
    let (p, s) = load("buchi.sem", "buchi.sol");
    let suite = adapter_suite("-4..4", "0..6", "-1..6");

    // Without reification the fixed-point emitter must refuse.
    let no_reify = solve::encode_for(
        &p,
        &s,
        Backend::Muclp,
        &VerifyOptions {
            opts: vec![],
            ..VerifyOptions::default()
        },
    );
    match no_reify {
        Err(EncodeError::NotReified) => {}
        other => errs.push(format!(
            "expected the emit precondition to fail without reification, got {other:?}"
        )),
    }

    // With reification and inlining the same query emits and solves.
    let run = solve::verify(
        &p,
        &s,
        &suite,
        &VerifyOptions {
            backend: Some(Backend::Muclp),
            ..VerifyOptions::default()
        },
    )
    .expect("verify runs");
    check(
        run.verdict == Verdict::Valid,
        &format!("reify+inline configuration: got {}", run.verdict),
        &mut errs,
    );
    report(
        "criterion 8 (reification ablation)",
        finish(
            errs,
            "no-reify fails the emit precondition; reify+inline solves".to_string(),
        ),
    );
}
