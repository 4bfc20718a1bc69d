//! External solver dispatch: configuration, process isolation, verdict
//! parsing, the end-to-end `verify` pipeline, and the parallel portfolio.
//!
//! Backends are configured in a TOML file; nothing is hard-coded. Each entry
//! names a command line with a `{file}` placeholder and the regular
//! expressions that recognize its valid/invalid answers:
//!
//! ```toml
//! [backend.z3]
//! kind = "smt"
//! cmd = "z3"
//! args = ["-smt2", "{file}"]
//! valid_regex = "^unsat"
//! invalid_regex = "^sat"
//! timeout_s = 300
//! ```
//!
//! The `MUSE_SOLVER_CONFIG` environment variable overrides the config path.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::os::unix::process::CommandExt;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::time::{Duration, Instant};

use serde::Deserialize;
use thiserror::Error;

use crate::analysis::{self, Backend};
use crate::encode::{self, DualOrder, EncodeError, EncodedQuery, QueryKind};
use crate::formula::FreshCounter;
use crate::oracle::{self, FiniteDomain, OracleError};
use crate::semantics::{Problem, Solution, SolutionError, Verdict};

pub const CONFIG_ENV_VAR: &str = "MUSE_SOLVER_CONFIG";

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Solution(#[from] SolutionError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Smt,
    Horn,
    Muclp,
}

impl BackendKind {
    pub fn accepts(self, kind: QueryKind) -> bool {
        matches!(
            (self, kind),
            (BackendKind::Smt, QueryKind::Smt)
                | (BackendKind::Horn, QueryKind::Chc)
                | (BackendKind::Muclp, QueryKind::Muclp)
                | (BackendKind::Muclp, QueryKind::CoChc)
        )
    }
}

fn default_timeout() -> f64 {
    300.0
}

/// One configured backend process.
#[derive(Debug, Clone, Deserialize)]
pub struct SolverConfig {
    #[serde(skip)]
    pub name: String,
    pub kind: BackendKind,
    pub cmd: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub valid_regex: String,
    pub invalid_regex: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    /// Advisory only; recorded in reports, not enforced.
    #[serde(default)]
    pub memory_mb: Option<u64>,
    /// Optional dialect template with `{{goal}}`/`{{equations}}` holes for
    /// fixed-point backends.
    #[serde(default)]
    pub template: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct ConfigFile {
    #[serde(default)]
    backend: BTreeMap<String, SolverConfig>,
}

/// The set of configured backends.
#[derive(Debug, Clone, Default)]
pub struct SolverSuite {
    pub backends: Vec<SolverConfig>,
}

impl SolverSuite {
    pub fn from_str(text: &str) -> Result<SolverSuite, SolveError> {
        let parsed: ConfigFile =
            toml::from_str(text).map_err(|e| SolveError::Config(e.to_string()))?;
        let mut backends = Vec::new();
        for (name, mut cfg) in parsed.backend {
            if cfg.timeout_s <= 0.0 {
                return Err(SolveError::Config(format!(
                    "backend {name}: timeout must be positive"
                )));
            }
            cfg.name = name;
            backends.push(cfg);
        }
        Ok(SolverSuite { backends })
    }

    pub fn from_path(path: &Path) -> Result<SolverSuite, SolveError> {
        let text = std::fs::read_to_string(path)?;
        let mut suite = SolverSuite::from_str(&text)?;
        // Relative commands resolve against the config file's directory.
        if let Some(dir) = path.parent() {
            for b in &mut suite.backends {
                let p = dir.join(&b.cmd);
                if b.cmd.contains('/') && p.exists() {
                    b.cmd = p.to_string_lossy().into_owned();
                }
            }
        }
        Ok(suite)
    }

    /// Loads the suite from an explicit path, the `MUSE_SOLVER_CONFIG`
    /// environment variable, or returns the empty suite.
    pub fn load(explicit: Option<&Path>) -> Result<SolverSuite, SolveError> {
        if let Some(p) = explicit {
            return SolverSuite::from_path(p);
        }
        if let Ok(p) = std::env::var(CONFIG_ENV_VAR) {
            return SolverSuite::from_path(Path::new(&p));
        }
        Ok(SolverSuite::default())
    }

    pub fn for_kind(&self, kind: QueryKind) -> Option<&SolverConfig> {
        self.backends.iter().find(|b| b.kind.accepts(kind))
    }
}

/// Optimizations applied between classification and encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Opt {
    Reify,
    Inline,
    Qe,
}

impl std::fmt::Display for Opt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Opt::Reify => write!(f, "reify"),
            Opt::Inline => write!(f, "inline"),
            Opt::Qe => write!(f, "qe"),
        }
    }
}

pub fn default_opts() -> Vec<Opt> {
    vec![Opt::Reify, Opt::Inline]
}

/// Verification pipeline options.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Force a backend instead of following the classification.
    pub backend: Option<Backend>,
    pub opts: Vec<Opt>,
    pub dual_order: DualOrder,
    /// When a backend answers unknown or times out, fall back to the oracle
    /// over this domain (the verdict is then domain-bounded).
    pub fallback_oracle: Option<FiniteDomain>,
    /// Override every backend timeout, in seconds.
    pub timeout_s: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            backend: None,
            opts: default_opts(),
            dual_order: DualOrder::default(),
            fallback_oracle: None,
            timeout_s: None,
        }
    }
}

/// Outcome of one solver run (or of the whole pipeline).
#[derive(Debug, Clone)]
pub struct SolverRun {
    pub backend: Option<String>,
    pub encoding: Option<QueryKind>,
    pub classification: Option<Backend>,
    pub optimizations: Vec<Opt>,
    pub verdict: Verdict,
    pub wall: Duration,
    pub raw_output: String,
    /// The verdict came from the finite-domain oracle.
    pub domain_bounded: bool,
    pub pid: Option<u32>,
}

impl SolverRun {
    fn unknown(reason: impl Into<String>) -> SolverRun {
        SolverRun {
            backend: None,
            encoding: None,
            classification: None,
            optimizations: Vec::new(),
            verdict: Verdict::Unknown(reason.into()),
            wall: Duration::ZERO,
            raw_output: String::new(),
            domain_bounded: false,
            pid: None,
        }
    }
}

/// Encodes a query for the given backend with the given optimizations.
pub fn encode_for(
    problem: &Problem,
    solution: &Solution,
    backend: Backend,
    options: &VerifyOptions,
) -> Result<EncodedQuery, EncodeError> {
    let mut fresh = FreshCounter::new();
    let mut query = match backend {
        Backend::Smt => encode::smt_formula_of(problem, solution, &mut fresh)?,
        Backend::Chc => encode::chc_of(problem, solution, &mut fresh)?,
        Backend::CoChc => encode::co_chc_of(problem, solution, &mut fresh)?,
        Backend::Muclp => encode::muclp_of(problem, solution, options.dual_order)?,
        Backend::Split => {
            return Err(EncodeError::Internal(
                "split queries are encoded per half".to_string(),
            ))
        }
    };
    if options.opts.contains(&Opt::Reify) && !query.reified {
        query = encode::reify_query(&query);
    }
    if options.opts.contains(&Opt::Inline) {
        query = encode::inline_query(&query, &mut fresh);
    }
    if options.opts.contains(&Opt::Qe) {
        query = encode::qe_query(&query);
    }
    let text = match query.kind {
        QueryKind::Smt => encode::emit_smtlib(&query)?,
        QueryKind::Chc => encode::emit_horn(&query)?,
        QueryKind::Muclp | QueryKind::CoChc => encode::emit_muclp(&query)?,
    };
    query.text = Some(text);
    Ok(query)
}

fn extension_for(kind: QueryKind) -> &'static str {
    match kind {
        QueryKind::Smt | QueryKind::Chc => "smt2",
        QueryKind::Muclp | QueryKind::CoChc => "muclp",
    }
}

/// Spawns the configured solver on the emitted query file, watching the
/// wall clock and a cancellation flag; the child never outlives the call.
pub fn run_backend_cancellable(
    query: &EncodedQuery,
    config: &SolverConfig,
    timeout_override: Option<f64>,
    cancel: &AtomicBool,
) -> SolverRun {
    let start = Instant::now();
    let text = match (&query.text, config.template.as_deref()) {
        (_, Some(template_path)) if matches!(query.kind, QueryKind::Muclp | QueryKind::CoChc) => {
            match std::fs::read_to_string(template_path)
                .map_err(SolveError::Io)
                .and_then(|t| encode::emit_muclp_with_template(query, &t).map_err(Into::into))
            {
                Ok(t) => t,
                Err(e) => return SolverRun::unknown(format!("template: {e}")),
            }
        }
        (Some(t), _) => t.clone(),
        (None, _) => return SolverRun::unknown("query was not emitted"),
    };

    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return SolverRun::unknown(format!("spawn: {e}")),
    };
    let file = dir.path().join(format!("query.{}", extension_for(query.kind)));
    if let Err(e) = std::fs::write(&file, &text) {
        return SolverRun::unknown(format!("spawn: {e}"));
    }

    let args: Vec<String> = config
        .args
        .iter()
        .map(|a| a.replace("{file}", &file.to_string_lossy()))
        .collect();
    let mut cmd = Command::new(&config.cmd);
    cmd.args(&args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        // Own process group, so cancellation kills grandchildren too.
        .process_group(0);
    let mut child: Child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) => return SolverRun::unknown(format!("spawn: {} ({e})", config.cmd)),
    };
    let pid = child.id();

    // Drain pipes on threads so the child cannot block on a full pipe.
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_handle = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });
    let err_handle = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });

    let timeout = Duration::from_secs_f64(timeout_override.unwrap_or(config.timeout_s));
    let mut timed_out = false;
    let mut cancelled = false;
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) => {
                if start.elapsed() >= timeout {
                    timed_out = true;
                    kill_group(&mut child, pid);
                    break;
                }
                if cancel.load(Ordering::Relaxed) {
                    cancelled = true;
                    kill_group(&mut child, pid);
                    break;
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => {
                kill_group(&mut child, pid);
                return SolverRun::unknown(format!("wait: {e}"));
            }
        }
    }
    let out = out_handle.join().unwrap_or_default();
    let err = err_handle.join().unwrap_or_default();
    let raw = format!("{out}{err}");
    let wall = start.elapsed();

    let verdict = if timed_out {
        Verdict::Timeout
    } else if cancelled {
        Verdict::Unknown("cancelled".to_string())
    } else {
        let valid = regex::Regex::new(&config.valid_regex)
            .ok()
            .map(|re| re.is_match(raw.trim()))
            .unwrap_or(false);
        let invalid = regex::Regex::new(&config.invalid_regex)
            .ok()
            .map(|re| re.is_match(raw.trim()))
            .unwrap_or(false);
        match (valid, invalid) {
            (true, false) => Verdict::Valid,
            (false, true) => Verdict::Invalid,
            _ => Verdict::Unknown(format!("unrecognized solver output: {}", raw.trim())),
        }
    };
    let domain_bounded = raw.contains("domain-bounded");
    SolverRun {
        backend: Some(config.name.clone()),
        encoding: Some(query.kind),
        classification: None,
        optimizations: Vec::new(),
        verdict,
        wall,
        raw_output: raw,
        domain_bounded,
        pid: Some(pid),
    }
}

/// Spawns the solver without external cancellation.
pub fn run_backend(
    query: &EncodedQuery,
    config: &SolverConfig,
    timeout_override: Option<f64>,
) -> SolverRun {
    run_backend_cancellable(query, config, timeout_override, &AtomicBool::new(false))
}

/// Kills the solver's whole process group, then reaps the direct child.
fn kill_group(child: &mut Child, pid: u32) {
    unsafe {
        libc::kill(-(pid as i32), libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

fn backend_to_kind(b: Backend) -> Option<QueryKind> {
    match b {
        Backend::Smt => Some(QueryKind::Smt),
        Backend::Chc => Some(QueryKind::Chc),
        Backend::CoChc => Some(QueryKind::CoChc),
        Backend::Muclp => Some(QueryKind::Muclp),
        Backend::Split => None,
    }
}

fn combine_split(neg: SolverRun, pos: SolverRun) -> SolverRun {
    let verdict = match (&neg.verdict, &pos.verdict) {
        (Verdict::Invalid, _) | (_, Verdict::Invalid) => Verdict::Invalid,
        (Verdict::Valid, Verdict::Valid) => Verdict::Valid,
        (Verdict::Timeout, _) | (_, Verdict::Timeout) => Verdict::Timeout,
        _ => Verdict::Unknown("a split half was inconclusive".to_string()),
    };
    SolverRun {
        backend: match (&neg.backend, &pos.backend) {
            (Some(a), Some(b)) if a == b => Some(a.clone()),
            (a, b) => Some(format!(
                "{}+{}",
                a.clone().unwrap_or_else(|| "oracle".into()),
                b.clone().unwrap_or_else(|| "oracle".into())
            )),
        },
        encoding: None,
        classification: Some(Backend::Split),
        optimizations: neg.optimizations.clone(),
        verdict,
        wall: neg.wall + pos.wall,
        raw_output: format!("[negative half]\n{}\n[positive half]\n{}", neg.raw_output, pos.raw_output),
        domain_bounded: neg.domain_bounded || pos.domain_bounded,
        pid: None,
    }
}

/// Runs one encoded query against the configured backend for its kind,
/// falling back to the oracle when allowed.
fn solve_query(
    query: &EncodedQuery,
    suite: &SolverSuite,
    options: &VerifyOptions,
) -> Result<SolverRun, SolveError> {
    let config = suite.for_kind(query.kind);
    let mut run = match config {
        Some(cfg) => run_backend(query, cfg, options.timeout_s),
        None => SolverRun::unknown(format!("no backend configured for {} queries", query.kind)),
    };
    if !run.verdict.is_definitive() {
        if let Some(dom) = options.fallback_oracle {
            let started = Instant::now();
            let verdict = oracle::oracle_decide_query(query, &dom)?;
            run = SolverRun {
                backend: run.backend.or_else(|| Some("oracle".to_string())),
                encoding: Some(query.kind),
                classification: None,
                optimizations: Vec::new(),
                verdict,
                wall: run.wall + started.elapsed(),
                raw_output: format!("{}\n(oracle fallback)", run.raw_output),
                domain_bounded: true,
                pid: run.pid,
            };
        }
    }
    Ok(run)
}

/// The end-to-end pipeline: classify, apply the selected optimizations,
/// encode for the recommended (or forced) backend, and dispatch. A split
/// classification runs both halves and combines them: valid iff both halves
/// are valid, invalid if either is.
pub fn verify(
    problem: &Problem,
    solution: &Solution,
    suite: &SolverSuite,
    options: &VerifyOptions,
) -> Result<SolverRun, SolveError> {
    problem.validate_solution(solution)?;
    let classification = analysis::classify(problem, solution);
    let chosen = options.backend.unwrap_or(classification.recommended);

    if chosen == Backend::Split {
        let analysis::SplitResult::Split { positive, negative } =
            analysis::split_specification(&problem.spec)
        else {
            return Err(SolveError::Encode(EncodeError::Hypothesis(
                "specification does not split".to_string(),
            )));
        };
        let neg_problem = Problem {
            spec: negative,
            ..problem.clone()
        };
        let pos_problem = Problem {
            spec: positive,
            ..problem.clone()
        };
        let neg_q = encode_for(&neg_problem, solution, Backend::Chc, options)?;
        let pos_q = encode_for(&pos_problem, solution, Backend::CoChc, options)?;
        let neg_run = solve_query(&neg_q, suite, options)?;
        let pos_run = solve_query(&pos_q, suite, options)?;
        let mut run = combine_split(neg_run, pos_run);
        run.classification = Some(chosen);
        run.optimizations = options.opts.clone();
        return Ok(run);
    }

    let query = encode_for(problem, solution, chosen, options)?;
    let mut run = solve_query(&query, suite, options)?;
    run.classification = Some(chosen);
    run.optimizations = options.opts.clone();
    Ok(run)
}

/// Launches every applicable encoding concurrently in isolated processes;
/// the first definitive verdict wins and the remaining children are killed.
/// When nothing is definitive, timeouts lose to other unknowns.
pub fn portfolio(
    problem: &Problem,
    solution: &Solution,
    suite: &SolverSuite,
    options: &VerifyOptions,
) -> Result<SolverRun, SolveError> {
    problem.validate_solution(solution)?;
    let classification = analysis::classify(problem, solution);

    // Applicable backends: everything whose hypothesis holds.
    let mut queries: Vec<EncodedQuery> = Vec::new();
    for backend in [Backend::Smt, Backend::Chc, Backend::CoChc, Backend::Muclp] {
        if backend_to_kind(backend).is_none() {
            continue;
        }
        match encode_for(problem, solution, backend, options) {
            Ok(q) => {
                if suite.for_kind(q.kind).is_some() {
                    queries.push(q);
                }
            }
            Err(EncodeError::Hypothesis(_)) => continue,
            Err(EncodeError::NotReified) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    if queries.is_empty() {
        // Fall back to the plain pipeline (it reports the missing backend or
        // uses the oracle fallback).
        return verify(problem, solution, suite, options);
    }

    let cancel = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel::<SolverRun>();
    let started = Instant::now();
    let mut handles = Vec::new();
    let pids = Arc::new(Mutex::new(Vec::<u32>::new()));
    for query in queries {
        let cfg = suite
            .for_kind(query.kind)
            .expect("filtered to configured kinds")
            .clone();
        let tx = tx.clone();
        let cancel = Arc::clone(&cancel);
        let pids = Arc::clone(&pids);
        let timeout = options.timeout_s;
        handles.push(std::thread::spawn(move || {
            let run = run_backend_cancellable(&query, &cfg, timeout, &cancel);
            if let Some(pid) = run.pid {
                pids.lock().unwrap().push(pid);
            }
            let _ = tx.send(run);
        }));
    }
    drop(tx);

    let mut best: Option<SolverRun> = None;
    for run in rx {
        if run.verdict.is_definitive() {
            cancel.store(true, Ordering::Relaxed);
            best = Some(run);
            break;
        }
        // Prefer timeouts below other unknowns when nothing is definitive.
        best = Some(match best {
            None => run,
            Some(prev) => match (&prev.verdict, &run.verdict) {
                (Verdict::Timeout, Verdict::Unknown(_)) => run,
                _ => prev,
            },
        });
    }
    cancel.store(true, Ordering::Relaxed);
    for h in handles {
        let _ = h.join();
    }
    let mut run = best.unwrap_or_else(|| SolverRun::unknown("no backend produced a result"));
    run.classification = Some(classification.recommended);
    run.optimizations = options.opts.clone();
    run.wall = started.elapsed();
    if !run.verdict.is_definitive() {
        if let Some(dom) = options.fallback_oracle {
            let verdict = oracle::oracle_verify(problem, solution, &dom)?;
            run.verdict = verdict;
            run.domain_bounded = true;
            run.backend = Some("oracle".to_string());
        }
    }
    Ok(run)
}
