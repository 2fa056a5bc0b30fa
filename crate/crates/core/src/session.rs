//! Single-agent runs: load a goal, run it, read back bindings and a trace.

use std::sync::Arc;

use crate::engine::{conjuncts, Engine, RunStatus};
use crate::error::GlpError;
use crate::multiagent::program_lines;
use crate::parser::parse_term;
use crate::program::Program;
use crate::store::Bindings;
use crate::term::Term;
use crate::trace::Trace;

pub struct Session {
    pub engine: Engine,
    pub goal: Term,
    /// Query variable names with their pair ids.
    pub vars: Vec<(String, u64)>,
    header: Vec<String>,
}

impl Session {
    pub fn start(program: Arc<Program>, goal: &str) -> Result<Session, GlpError> {
        let q = parse_term(goal)?;
        let mut engine = Engine::new(program);
        let base = engine.ids.take(q.nvars());
        let term = q.instantiate(base);
        let vars: Vec<(String, u64)> =
            q.names.iter().enumerate().map(|(i, n)| (n.clone(), base + i as u64)).collect();
        let mut header = vec!["glp-trace v1 single".to_string()];
        header.push(format!("agent main module={}", engine.program.hash));
        header.extend(program_lines("main", &engine.program));
        for g in conjuncts(&term) {
            let gid = engine.add_goal(g.clone());
            header.push(format!("init main gid={gid} goal={g}"));
        }
        Ok(Session { engine, goal: term, vars, header })
    }

    pub fn run(&mut self, fuel: u64) -> Result<RunStatus, GlpError> {
        self.engine.run(fuel)
    }

    /// Current value of the writer named `name` in the query.
    pub fn binding(&self, name: &str) -> Option<Term> {
        let id = self.vars.iter().find(|(n, _)| n == name)?.1;
        self.engine.store.resolve(&Term::writer(id)).ok()
    }

    pub fn trace(&self) -> Trace {
        Trace { header: self.header.clone(), records: self.engine.trace.clone() }
    }
}
