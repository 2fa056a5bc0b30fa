//! Workloads shared by the benchmarks.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use glp_core::corpus;
use glp_core::multiagent::{Scenario, World};
use glp_core::program::Program;
use glp_core::session::Session;
use glp_core::trace::Trace;

pub fn corpus_program(name: &str) -> Arc<Program> {
    let e = corpus::entry(name).expect("corpus entry");
    Arc::new(e.program().expect("entry loads"))
}

/// `merge([0..n),[n..2n),Zs)`.
pub fn merge_goal(n: usize) -> String {
    let xs: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let ys: Vec<String> = (n..2 * n).map(|i| i.to_string()).collect();
    format!("merge([{}],[{}],Zs)", xs.join(","), ys.join(","))
}

pub fn run_goal(program: Arc<Program>, goal: &str) -> Session {
    let mut s = Session::start(program, goal).expect("goal parses");
    s.run(corpus::DEFAULT_FUEL).expect("run");
    s
}

pub fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/corpus/scenarios")
}

pub fn simulate(name: &str) -> Trace {
    let dir = scenario_dir();
    let sc = Scenario::load(&dir.join(format!("{name}.json"))).expect("scenario");
    let mut w = World::from_scenario(&sc, &dir).expect("world");
    w.run().expect("run");
    w.trace
}
