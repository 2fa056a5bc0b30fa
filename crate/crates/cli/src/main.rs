use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use glp_core::corpus;
use glp_core::engine::RunStatus;
use glp_core::multiagent::{Scenario, World};
use glp_core::parser::Module;
use glp_core::program::Program;
use glp_core::session::Session;
use glp_core::trace::Trace;
use glp_core::verifier;

const OK: u8 = 0;
const CHECK_FAILED: u8 = 1;
const USAGE: u8 = 2;
const FAILED_GOALS: u8 = 3;

#[derive(Parser)]
#[command(name = "glp", version, about = "Run, simulate and verify GLP programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse modules and check the single-reader/single-writer restriction.
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run a goal on a single agent.
    Run {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(short, long)]
        goal: String,
        #[arg(long, default_value_t = corpus::DEFAULT_FUEL)]
        fuel: u64,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Simulate a multiagent scenario.
    Sim {
        scenario: PathBuf,
        /// Scheduler seed; defaults to the scenario's own seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        fuel: Option<u64>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check a trace file.
    Verify {
        trace: PathBuf,
        /// Comma-separated: srsw, acyclic, deduction, monotonicity, streams, grassroots.
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
        /// Agents forming the group for the grassroots check.
        #[arg(long, value_delimiter = ',')]
        group: Vec<String>,
        /// Sampling seed for the monotonicity check.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = verifier::DEFAULT_SAMPLES)]
        samples: usize,
    },
    /// Run every bundled corpus entry against its expectations.
    CorpusTest,
}

/// GLP_SEED wins over the flag.
fn seed(flag: Option<u64>) -> Result<Option<u64>, String> {
    match std::env::var("GLP_SEED") {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| format!("GLP_SEED is not an integer: {s:?}")),
        Err(_) => Ok(flag),
    }
}

fn write_trace(path: &Path, t: &Trace) -> Result<(), String> {
    std::fs::write(path, t.render()).map_err(|e| format!("{}: {e}", path.display()))
}

fn check(files: &[PathBuf]) -> Result<u8, String> {
    let mut code = OK;
    for f in files {
        match Module::load(f) {
            Err(e) => {
                eprintln!("{}: {e}", f.display());
                code = CHECK_FAILED;
            }
            Ok(m) => {
                let vs = m.srsw_check();
                for v in &vs {
                    eprintln!("{}: {v}", f.display());
                }
                if vs.is_empty() {
                    println!("{}: ok ({} clauses)", f.display(), m.clauses.len());
                } else {
                    code = CHECK_FAILED;
                }
            }
        }
    }
    Ok(code)
}

fn run(files: &[PathBuf], goal: &str, fuel: u64, trace: Option<&Path>) -> Result<u8, String> {
    let program = Program::load_files(files).map_err(|e| e.to_string())?;
    let mut s = Session::start(Arc::new(program), goal).map_err(|e| e.to_string())?;
    let status = s.run(fuel).map_err(|e| e.to_string())?;
    for (name, _) in &s.vars {
        if name.starts_with('_') {
            continue;
        }
        if let Some(t) = s.binding(name) {
            println!("{name}={t}");
        }
    }
    for (gid, g, reason) in s.engine.failed() {
        eprintln!("failed goal {gid}: {g} ({reason})");
    }
    eprintln!("status: {}", status.as_str());
    if let Some(p) = trace {
        write_trace(p, &s.trace())?;
    }
    Ok(if status == RunStatus::Failed { FAILED_GOALS } else { OK })
}

fn sim(path: &Path, seed_flag: Option<u64>, fuel: Option<u64>, trace: Option<&Path>) -> Result<u8, String> {
    let mut sc = Scenario::load(path).map_err(|e| e.to_string())?;
    if let Some(s) = seed(seed_flag)? {
        sc.seed = s;
    }
    if let Some(f) = fuel {
        sc.fuel = f;
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut w = World::from_scenario(&sc, dir).map_err(|e| e.to_string())?;
    let out = w.run().map_err(|e| e.to_string())?;
    match trace {
        Some(p) => write_trace(p, &w.trace)?,
        None => print!("{}", w.trace.render()),
    }
    eprintln!("transactions: {} quiescent: {}", out.transactions, out.quiescent);
    for (a, st) in &out.statuses {
        eprintln!("{a}: {}", st.as_str());
    }
    Ok(if out.any_failed() { FAILED_GOALS } else { OK })
}

fn verify(path: &Path, checks: Option<Vec<String>>, group: &[String], seed_flag: u64, samples: usize) -> Result<u8, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let seed = seed(Some(seed_flag))?.unwrap_or(0);
    let t = match Trace::parse(&text) {
        Ok(t) => t,
        Err(e) => {
            println!("trace FAIL step=- {e}");
            return Ok(CHECK_FAILED);
        }
    };
    let names = checks.unwrap_or_else(|| verifier::CHECKS.iter().map(|s| s.to_string()).collect());
    let mut code = OK;
    for n in &names {
        let v = match n.as_str() {
            "monotonicity" => verifier::verify_monotonicity(&t, seed, samples),
            "grassroots" => {
                if group.is_empty() {
                    return Err("the grassroots check needs --group".into());
                }
                let g: Vec<&str> = group.iter().map(String::as_str).collect();
                verifier::verify_grassroots_interaction(&t, &g)
            }
            other if verifier::CHECKS.contains(&other) => verifier::run_checks(&t, &[other], seed).remove(0),
            other => return Err(format!("unknown check {other:?}")),
        };
        if !v.ok {
            code = CHECK_FAILED;
        }
        println!("{v}");
    }
    Ok(code)
}

fn corpus_test() -> Result<u8, String> {
    let entries = corpus::load_corpus().map_err(|e| e.to_string())?;
    let mut code = OK;
    for e in &entries {
        let r = corpus::check_entry(e);
        if r.failures.is_empty() {
            println!("{} ok ({} runs)", e.name, e.runs.len());
        } else {
            code = CHECK_FAILED;
            for f in &r.failures {
                println!("{} FAIL {f}", e.name);
            }
        }
    }
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { OK });
        }
    };
    let res = match cli.cmd {
        Cmd::Check { files } => check(&files),
        Cmd::Run { files, goal, fuel, trace } => run(&files, &goal, fuel, trace.as_deref()),
        Cmd::Sim { scenario, seed, fuel, trace } => sim(&scenario, seed, fuel, trace.as_deref()),
        Cmd::Verify { trace, checks, group, seed, samples } => verify(&trace, checks, &group, seed, samples),
        Cmd::CorpusTest => corpus_test(),
    };
    match res {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("glp: {e}");
            ExitCode::from(USAGE)
        }
    }
}
