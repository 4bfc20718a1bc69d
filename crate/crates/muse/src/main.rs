//! Command-line entry point: classify, encode, verify, oracle-check, corpus
//! regression, and the reference backend adapters.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use muse::adapter;
use muse::analysis::{self, Backend};
use muse::encode::DualOrder;
use muse::frontend;
use muse::oracle::{self, FiniteDomain, Policy};
use muse::semantics::{Problem, Solution, Verdict};
use muse::solve::{self, Opt, SolverSuite, VerifyOptions};

const EXIT_VALID: u8 = 0;
const EXIT_INVALID: u8 = 1;
const EXIT_UNKNOWN: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_INPUT: u8 = 65;

#[derive(Parser)]
#[command(
    name = "muse",
    about = "Verify candidate programs against user-defined fixed-point semantics",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Smt,
    Chc,
    Cochc,
    Muclp,
    Auto,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Stuck,
    Clamp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DualOrderArg {
    Before,
    After,
}

#[derive(Args)]
struct ProblemArgs {
    /// Problem file (s-expression format).
    #[arg(long)]
    problem: PathBuf,
    /// Solution file with one (define NAME TERM) per synth-fun.
    #[arg(long)]
    solution: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify a (problem, solution) pair and print the recommended backend.
    Classify {
        #[command(flatten)]
        io: ProblemArgs,
        #[arg(long)]
        json: bool,
    },
    /// Encode the query for a backend and write the emitted script.
    Encode {
        #[command(flatten)]
        io: ProblemArgs,
        #[arg(long, value_enum, default_value = "auto")]
        backend: BackendArg,
        /// Comma-separated optimizations: reify,inline,qe or none.
        #[arg(long, default_value = "reify,inline")]
        opt: String,
        /// Output file; split classifications write FILE.neg/.pos variants.
        #[arg(short, long)]
        out: PathBuf,
        /// Placement of complement equations relative to their originals.
        #[arg(long = "dual-order", value_enum, default_value = "before")]
        dual_order: DualOrderArg,
    },
    /// Run the full pipeline: classify, optimize, encode, dispatch.
    Verify {
        #[command(flatten)]
        io: ProblemArgs,
        #[arg(long, value_enum, default_value = "auto")]
        backend: BackendArg,
        #[arg(long, default_value = "reify,inline")]
        opt: String,
        /// Solver configuration (TOML); MUSE_SOLVER_CONFIG is the fallback.
        #[arg(long)]
        solvers: Option<PathBuf>,
        /// Override backend timeouts, in seconds.
        #[arg(long)]
        timeout: Option<f64>,
        /// Run every applicable backend concurrently; first verdict wins.
        #[arg(long)]
        portfolio: bool,
        /// On unknown/timeout, fall back to the oracle over this domain.
        #[arg(long = "fallback-oracle", value_name = "LO..HI", allow_hyphen_values = true)]
        fallback_oracle: Option<String>,
        #[arg(long = "dual-order", value_enum, default_value = "before")]
        dual_order: DualOrderArg,
        #[arg(long)]
        json: bool,
    },
    /// Decide the query exactly over a finite domain.
    Oracle {
        #[command(flatten)]
        io: ProblemArgs,
        /// Inclusive interval, e.g. -4..4
        #[arg(long, value_name = "LO..HI", allow_hyphen_values = true)]
        domain: String,
        #[arg(long, value_enum, default_value = "stuck")]
        policy: PolicyArg,
        /// Cross-check least-fixed-point tuples by derivation search of this
        /// depth.
        #[arg(long)]
        depth: Option<usize>,
        /// Print the full interpretation.
        #[arg(long)]
        dump: bool,
        #[arg(long)]
        json: bool,
    },
    /// Replay the regression corpus (corpus.toml) against the oracle.
    Corpus {
        /// Directory containing corpus.toml and the fixture files.
        #[arg(long, default_value = "fixtures")]
        dir: PathBuf,
    },
    /// Reference adapter: decide an emitted quantified-LIA script over a
    /// finite domain (domain-bounded; prints sat/unsat).
    SolveSmt {
        file: PathBuf,
        #[arg(long, value_name = "LO..HI", default_value = "-4..4", allow_hyphen_values = true)]
        domain: String,
    },
    /// Reference adapter: decide an emitted Horn script over a finite domain
    /// (domain-bounded; prints sat/unsat).
    SolveHorn {
        file: PathBuf,
        #[arg(long, value_name = "LO..HI", default_value = "-4..4", allow_hyphen_values = true)]
        domain: String,
    },
    /// Reference adapter: decide an emitted muclp-v1 script over a finite
    /// domain (domain-bounded; prints valid/invalid).
    SolveMuclp {
        file: PathBuf,
        #[arg(long, value_name = "LO..HI", default_value = "-4..4", allow_hyphen_values = true)]
        domain: String,
        #[arg(long, value_enum, default_value = "stuck")]
        policy: PolicyArg,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

#[derive(Debug)]
struct CliError {
    message: String,
    usage: bool,
}

impl CliError {
    fn input(message: impl Into<String>) -> CliError {
        CliError {
            message: message.into(),
            usage: false,
        }
    }

    fn usage(message: impl Into<String>) -> CliError {
        CliError {
            message: message.into(),
            usage: true,
        }
    }

    fn exit_code(&self) -> u8 {
        if self.usage {
            EXIT_USAGE
        } else {
            EXIT_INPUT
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

fn parse_domain(text: &str, policy: Policy) -> Result<FiniteDomain, CliError> {
    let Some((lo, hi)) = text.split_once("..") else {
        return Err(CliError::usage(format!(
            "domain must look like LO..HI, got {text}"
        )));
    };
    let lo: i64 = lo
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("bad domain bound {lo}")))?;
    let hi: i64 = hi
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("bad domain bound {hi}")))?;
    if lo > hi {
        return Err(CliError::usage(format!("empty domain {lo}..{hi}")));
    }
    FiniteDomain::with_policy(lo, hi, policy).map_err(|e| CliError::input(e.to_string()))
}

fn parse_opts(text: &str) -> Result<Vec<Opt>, CliError> {
    if text.trim() == "none" {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for part in text.split(',') {
        match part.trim() {
            "reify" => out.push(Opt::Reify),
            "inline" => out.push(Opt::Inline),
            "qe" => out.push(Opt::Qe),
            "" => {}
            other => return Err(CliError::usage(format!("unknown optimization {other}"))),
        }
    }
    Ok(out)
}

fn load_problem(path: &Path) -> Result<Problem, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let name = path.to_string_lossy();
    match frontend::parse_problem(&text, &name) {
        Ok(parsed) => {
            for w in &parsed.warnings {
                eprintln!("{w}");
            }
            Ok(parsed.problem)
        }
        Err(diags) => {
            for d in &diags {
                eprintln!("{d}");
            }
            Err(CliError::input(format!(
                "{} error(s) in {name}",
                diags.len()
            )))
        }
    }
}

fn load_solution(path: &Path, problem: &Problem) -> Result<Solution, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let name = path.to_string_lossy();
    match frontend::parse_solution(&text, &name, problem) {
        Ok(s) => Ok(s),
        Err(diags) => {
            for d in &diags {
                eprintln!("{d}");
            }
            Err(CliError::input(format!(
                "{} error(s) in {name}",
                diags.len()
            )))
        }
    }
}

fn verdict_exit(v: &Verdict) -> ExitCode {
    ExitCode::from(match v {
        Verdict::Valid => EXIT_VALID,
        Verdict::Invalid => EXIT_INVALID,
        Verdict::Unknown(_) => EXIT_UNKNOWN,
        Verdict::Timeout => EXIT_TIMEOUT,
    })
}

#[derive(Serialize)]
struct Report {
    verdict: String,
    backend: Option<String>,
    encoding_kind: Option<String>,
    optimizations: Vec<String>,
    wall_ms: u128,
    domain_bounded: bool,
}

fn backend_choice(arg: BackendArg) -> Option<Backend> {
    match arg {
        BackendArg::Smt => Some(Backend::Smt),
        BackendArg::Chc => Some(Backend::Chc),
        BackendArg::Cochc => Some(Backend::CoChc),
        BackendArg::Muclp => Some(Backend::Muclp),
        BackendArg::Auto => None,
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.cmd {
        Cmd::Classify { io, json } => {
            let problem = load_problem(&io.problem)?;
            let solution = load_solution(&io.solution, &problem)?;
            let c = analysis::classify(&problem, &solution);
            if json {
                let pol: std::collections::BTreeMap<String, String> = c
                    .spec_polarity
                    .iter()
                    .map(|(k, v)| (k.clone(), format!("{v:?}").to_lowercase()))
                    .collect();
                println!(
                    "{}",
                    serde_json::json!({
                        "recommended": c.recommended.to_string(),
                        "non_recursive": c.non_recursive,
                        "chc_like": c.chc_like,
                        "spec_polarity": pol,
                    })
                );
            } else {
                println!("recommended backend: {}", c.recommended);
                println!("non-recursive: {}", c.non_recursive);
                println!("chc-like: {}", c.chc_like);
                for (rel, pol) in &c.spec_polarity {
                    println!("polarity of {rel}: {pol:?}");
                }
            }
            Ok(ExitCode::from(EXIT_VALID))
        }
        Cmd::Encode {
            io,
            backend,
            opt,
            out,
            dual_order,
        } => {
            let problem = load_problem(&io.problem)?;
            let solution = load_solution(&io.solution, &problem)?;
            let opts = parse_opts(&opt)?;
            let options = VerifyOptions {
                backend: backend_choice(backend),
                opts,
                dual_order: match dual_order {
                    DualOrderArg::Before => DualOrder::ComplementsFirst,
                    DualOrderArg::After => DualOrder::ComplementsAfter,
                },
                fallback_oracle: None,
                timeout_s: None,
            };
            let classification = analysis::classify(&problem, &solution);
            let chosen = options.backend.unwrap_or(classification.recommended);
            println!("classification: {}", classification.recommended);
            if chosen == Backend::Split {
                let analysis::SplitResult::Split { positive, negative } =
                    analysis::split_specification(&problem.spec)
                else {
                    return Err(CliError::input("specification does not split"));
                };
                for (suffix, spec, half_backend) in [
                    ("neg", negative, Backend::Chc),
                    ("pos", positive, Backend::CoChc),
                ] {
                    let half = Problem {
                        spec,
                        ..problem.clone()
                    };
                    let q = solve::encode_for(&half, &solution, half_backend, &options)
                        .map_err(|e| CliError::input(e.to_string()))?;
                    let path = out.with_extension(format!(
                        "{suffix}.{}",
                        if half_backend == Backend::Chc { "smt2" } else { "muclp" }
                    ));
                    std::fs::write(&path, q.text.as_deref().unwrap_or(""))
                        .map_err(|e| CliError::input(e.to_string()))?;
                    println!("wrote {} ({half_backend})", path.display());
                }
            } else {
                let q = solve::encode_for(&problem, &solution, chosen, &options)
                    .map_err(|e| CliError::input(e.to_string()))?;
                std::fs::write(&out, q.text.as_deref().unwrap_or(""))
                    .map_err(|e| CliError::input(e.to_string()))?;
                println!("wrote {} ({chosen})", out.display());
            }
            Ok(ExitCode::from(EXIT_VALID))
        }
        Cmd::Verify {
            io,
            backend,
            opt,
            solvers,
            timeout,
            portfolio,
            fallback_oracle,
            dual_order,
            json,
        } => {
            let problem = load_problem(&io.problem)?;
            let solution = load_solution(&io.solution, &problem)?;
            let opts = parse_opts(&opt)?;
            let fallback = fallback_oracle
                .map(|d| parse_domain(&d, Policy::Stuck))
                .transpose()?;
            let suite = SolverSuite::load(solvers.as_deref())
                .map_err(|e| CliError::input(e.to_string()))?;
            let options = VerifyOptions {
                backend: backend_choice(backend),
                opts,
                dual_order: match dual_order {
                    DualOrderArg::Before => DualOrder::ComplementsFirst,
                    DualOrderArg::After => DualOrder::ComplementsAfter,
                },
                fallback_oracle: fallback,
                timeout_s: timeout,
            };
            let run = if portfolio {
                solve::portfolio(&problem, &solution, &suite, &options)
            } else {
                solve::verify(&problem, &solution, &suite, &options)
            }
            .map_err(|e| CliError::input(e.to_string()))?;
            if json {
                let report = Report {
                    verdict: run.verdict.to_string(),
                    backend: run.backend.clone(),
                    encoding_kind: run.encoding.map(|k| k.to_string()),
                    optimizations: run.optimizations.iter().map(|o| o.to_string()).collect(),
                    wall_ms: run.wall.as_millis(),
                    domain_bounded: run.domain_bounded,
                };
                println!("{}", serde_json::to_string(&report).unwrap());
            } else {
                let bounded = if run.domain_bounded {
                    " (domain-bounded)"
                } else {
                    ""
                };
                println!(
                    "{}{} [backend: {}, encoding: {}, {} ms]",
                    run.verdict,
                    bounded,
                    run.backend.as_deref().unwrap_or("none"),
                    run.encoding
                        .map(|k| k.to_string())
                        .unwrap_or_else(|| "split".to_string()),
                    run.wall.as_millis()
                );
            }
            Ok(verdict_exit(&run.verdict))
        }
        Cmd::Oracle {
            io,
            domain,
            policy,
            depth,
            dump,
            json,
        } => {
            let problem = load_problem(&io.problem)?;
            let solution = load_solution(&io.solution, &problem)?;
            let policy = match policy {
                PolicyArg::Stuck => Policy::Stuck,
                PolicyArg::Clamp => Policy::Clamp,
            };
            let dom = parse_domain(&domain, policy)?;
            let started = std::time::Instant::now();
            let run = oracle::oracle_verify_full(&problem, &solution, &dom)
                .map_err(|e| CliError::input(e.to_string()))?;
            if dump {
                for (rel, tuples) in &run.interpretation.relations {
                    println!("{rel}: {} tuple(s)", tuples.len());
                    for t in tuples {
                        let rendered: Vec<String> = t.iter().map(|v| v.to_string()).collect();
                        println!("  ({})", rendered.join(", "));
                    }
                }
            }
            if let Some(depth) = depth {
                match derivation_cross_check(&problem, &solution, &dom, depth) {
                    Ok((checked, mismatches)) if mismatches == 0 => {
                        println!("derivation cross-check: ok ({checked} tuple(s), depth {depth})")
                    }
                    Ok((checked, mismatches)) => println!(
                        "derivation cross-check: {mismatches}/{checked} tuple(s) not derivable at depth {depth}"
                    ),
                    Err(e) => println!("derivation cross-check skipped: {e}"),
                }
            }
            if json {
                let report = Report {
                    verdict: run.verdict.to_string(),
                    backend: Some("oracle".to_string()),
                    encoding_kind: Some("muclp".to_string()),
                    optimizations: vec![Opt::Reify.to_string()],
                    wall_ms: started.elapsed().as_millis(),
                    domain_bounded: true,
                };
                println!("{}", serde_json::to_string(&report).unwrap());
            } else {
                println!("{} (domain-bounded over {}..{})", run.verdict, dom.lo, dom.hi);
            }
            Ok(verdict_exit(&run.verdict))
        }
        Cmd::Corpus { dir } => corpus(&dir),
        Cmd::SolveSmt { file, domain } => {
            let dom = parse_domain(&domain, Policy::Stuck)?;
            let text = std::fs::read_to_string(&file)
                .map_err(|e| CliError::input(format!("{}: {e}", file.display())))?;
            let verdict = adapter::solve_smt_script(&text, &dom)
                .map_err(|e| CliError::input(e.to_string()))?;
            // SMT convention: the script asserts the negated goal.
            match verdict {
                Verdict::Valid => println!("unsat"),
                _ => println!("sat"),
            }
            println!("; domain-bounded over {}..{}", dom.lo, dom.hi);
            Ok(ExitCode::from(EXIT_VALID))
        }
        Cmd::SolveHorn { file, domain } => {
            let dom = parse_domain(&domain, Policy::Stuck)?;
            let text = std::fs::read_to_string(&file)
                .map_err(|e| CliError::input(format!("{}: {e}", file.display())))?;
            let verdict = adapter::solve_horn_script(&text, &dom)
                .map_err(|e| CliError::input(e.to_string()))?;
            // HORN convention: sat means the query holds.
            match verdict {
                Verdict::Valid => println!("sat"),
                _ => println!("unsat"),
            }
            println!("; domain-bounded over {}..{}", dom.lo, dom.hi);
            Ok(ExitCode::from(EXIT_VALID))
        }
        Cmd::SolveMuclp {
            file,
            domain,
            policy,
        } => {
            let policy = match policy {
                PolicyArg::Stuck => Policy::Stuck,
                PolicyArg::Clamp => Policy::Clamp,
            };
            let dom = parse_domain(&domain, policy)?;
            let text = std::fs::read_to_string(&file)
                .map_err(|e| CliError::input(format!("{}: {e}", file.display())))?;
            let verdict = adapter::solve_muclp_script(&text, &dom)
                .map_err(|e| CliError::input(e.to_string()))?;
            match verdict {
                Verdict::Valid => println!("valid"),
                _ => println!("invalid"),
            }
            println!("; domain-bounded over {}..{}", dom.lo, dom.hi);
            Ok(ExitCode::from(EXIT_VALID))
        }
    }
}

/// For every least-fixed-point tuple the oracle computed, check that a
/// derivation of the configured depth exists. Only applies to relations
/// whose rules are in the Horn fragment.
fn derivation_cross_check(
    problem: &Problem,
    solution: &Solution,
    dom: &FiniteDomain,
    depth: usize,
) -> Result<(usize, usize), CliError> {
    let query = muse::encode::muclp_of(problem, solution, DualOrder::default())
        .map_err(|e| CliError::input(e.to_string()))?;
    let reified = muse::encode::reify_query(&query);
    let eqs: Vec<muse::FixpointEquation> =
        reified.equations.iter().map(|e| e.to_fixpoint()).collect();
    let interp =
        oracle::eval_system(&eqs, dom).map_err(|e| CliError::input(e.to_string()))?;
    let mut checked = 0;
    let mut mismatches = 0;
    for eq in &reified.equations {
        if eq.complement || eq.fix != muse::Fix::Mu {
            continue;
        }
        if !analysis::chc_like_for(&problem.semantics, &eq.base, &eq.term) {
            continue;
        }
        let name = eq.head_name();
        let Some(tuples) = interp.relations.get(&name) else {
            continue;
        };
        for t in tuples {
            checked += 1;
            let ok = oracle::bounded_derivation(problem, &eq.base, &eq.term, t, depth)
                .map_err(|e| CliError::input(e.to_string()))?;
            if !ok {
                mismatches += 1;
            }
        }
    }
    if checked == 0 {
        return Err(CliError::input(
            "no Horn-fragment least-fixed-point tuples to check".to_string(),
        ));
    }
    Ok((checked, mismatches))
}

fn corpus(dir: &Path) -> Result<ExitCode, CliError> {
    #[derive(serde::Deserialize)]
    struct Case {
        problem: String,
        solution: String,
        expected: String,
        domain: String,
        #[serde(default)]
        policy: Option<String>,
    }
    #[derive(serde::Deserialize)]
    struct Manifest {
        #[serde(rename = "case")]
        cases: Vec<Case>,
    }
    let manifest_path = dir.join("corpus.toml");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| CliError::input(format!("{}: {e}", manifest_path.display())))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| CliError::input(e.to_string()))?;
    let mut failures = 0;
    for case in &manifest.cases {
        let problem = load_problem(&dir.join(&case.problem))?;
        let solution = load_solution(&dir.join(&case.solution), &problem)?;
        let policy = match case.policy.as_deref() {
            Some("clamp") => Policy::Clamp,
            _ => Policy::Stuck,
        };
        let dom = parse_domain(&case.domain, policy)?;
        let verdict = oracle::oracle_verify(&problem, &solution, &dom)
            .map_err(|e| CliError::input(e.to_string()))?;
        let got = verdict.to_string();
        let ok = got == case.expected;
        if !ok {
            failures += 1;
        }
        println!(
            "{} {} + {} @ {}: expected {}, got {}",
            if ok { "PASS" } else { "FAIL" },
            case.problem,
            case.solution,
            case.domain,
            case.expected,
            got
        );
    }
    if failures == 0 {
        println!("corpus: all {} case(s) pass", manifest.cases.len());
        Ok(ExitCode::from(EXIT_VALID))
    } else {
        println!("corpus: {failures} failing case(s)");
        Ok(ExitCode::from(EXIT_INVALID))
    }
}
