//! A loaded program: modules merged into one procedure table, with the
//! preloaded library clauses and load-time validation.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::GlpError;
use crate::parser::{parse_clauses, Clause, Module};
use crate::term::Polarity;

/// Clauses every program gets unless it defines the procedure itself.
pub const PRELUDE: &str = "\
X? := E :- ground(E) | evaluate(E?, X).
export_reader(Y, Z?) :- known(Y) | Z = Y?.
";

/// Guard predicates evaluated by the engine, by name and arity.
pub const GUARD_BUILTINS: &[(&str, usize)] = &[
    ("ground", 1),
    ("known", 1),
    ("unknown", 1),
    ("writer", 1),
    ("reader", 1),
    ("otherwise", 0),
    ("true", 0),
    ("=", 2),
    ("=\\=", 2),
    ("<", 2),
    (">", 2),
    ("=<", 2),
    (">=", 2),
    ("=:=", 2),
    ("attestation", 2),
    ("module", 1),
];

/// Body goals executed directly by the engine.
pub const GOAL_BUILTINS: &[(&str, usize)] =
    &[("=", 2), ("evaluate", 2), ("current_time", 1), ("variable_name", 2), ("true", 0)];

pub fn is_guard_builtin(name: &str, arity: usize) -> bool {
    GUARD_BUILTINS.contains(&(name, arity))
}

pub fn is_goal_builtin(name: &str, arity: usize) -> bool {
    GOAL_BUILTINS.contains(&(name, arity))
}

#[derive(Debug, Clone)]
pub struct Procedure {
    pub name: String,
    pub arity: usize,
    pub clauses: Vec<Arc<Clause>>,
    /// All clauses are unit clauses, so the procedure may be called from guards.
    pub unit_only: bool,
}

#[derive(Debug, Clone)]
pub struct Program {
    pub modules: Vec<Module>,
    procs: HashMap<(String, usize), Procedure>,
    pub hash: String,
}

impl Program {
    pub fn new(modules: Vec<Module>) -> Result<Program, GlpError> {
        let mut seen = std::collections::BTreeSet::new();
        for m in &modules {
            if !seen.insert(m.name.clone()) {
                return Err(GlpError::DuplicateModule(m.name.clone()));
            }
        }
        for m in &modules {
            let bad: Vec<String> = m
                .srsw_check()
                .into_iter()
                .filter(|v| v.polarity == Polarity::Writer)
                .map(|v| v.to_string())
                .collect();
            if !bad.is_empty() {
                return Err(GlpError::Load(format!("unwaived writer violations: {}", bad.join("; "))));
            }
        }
        let mut procs: HashMap<(String, usize), Procedure> = HashMap::new();
        for m in &modules {
            for c in &m.clauses {
                let (name, arity) = c.key();
                procs
                    .entry((name.clone(), arity))
                    .or_insert_with(|| Procedure { name, arity, clauses: Vec::new(), unit_only: true })
                    .clauses
                    .push(Arc::new(c.clone()));
            }
        }
        for c in parse_clauses("<prelude>", PRELUDE).expect("prelude parses") {
            let (name, arity) = c.key();
            procs
                .entry((name.clone(), arity))
                .or_insert_with(|| Procedure { name, arity, clauses: vec![Arc::new(c)], unit_only: false });
        }
        for p in procs.values_mut() {
            p.unit_only = p.clauses.iter().all(|c| c.is_unit());
        }
        for m in &modules {
            for (i, c) in m.clauses.iter().enumerate() {
                for g in &c.guard {
                    let (name, arity) = g.functor().expect("guard is callable");
                    if is_guard_builtin(name, arity) {
                        continue;
                    }
                    match procs.get(&(name.to_string(), arity)) {
                        Some(p) if p.unit_only => {}
                        Some(_) => {
                            return Err(GlpError::Load(format!(
                                "{}: clause {} (line {}): guard {name}/{arity} is not defined by unit clauses only",
                                m.name,
                                i + 1,
                                c.line
                            )))
                        }
                        None => {
                            return Err(GlpError::Load(format!(
                                "{}: clause {} (line {}): unknown guard predicate {name}/{arity}",
                                m.name,
                                i + 1,
                                c.line
                            )))
                        }
                    }
                }
            }
        }
        let mut h = Sha256::new();
        for m in &modules {
            h.update(m.print().as_bytes());
        }
        let hash = hex::encode(h.finalize());
        Ok(Program { modules, procs, hash })
    }

    pub fn from_source(name: &str, text: &str) -> Result<Program, GlpError> {
        Program::new(vec![Module::parse(name, text)?])
    }

    pub fn load_files<P: AsRef<Path>>(paths: &[P]) -> Result<Program, GlpError> {
        let modules = paths.iter().map(|p| Module::load(p.as_ref())).collect::<Result<Vec<_>, _>>()?;
        Program::new(modules)
    }

    pub fn lookup(&self, name: &str, arity: usize) -> Option<&Procedure> {
        self.procs.get(&(name.to_string(), arity))
    }

    /// Procedures sorted by name and arity.
    pub fn procedures(&self) -> Vec<&Procedure> {
        let mut v: Vec<&Procedure> = self.procs.values().collect();
        v.sort_by(|a, b| (&a.name, a.arity).cmp(&(&b.name, b.arity)));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_module_hash_matches_module() {
        let p = Program::from_source("m", "p(a).\n").unwrap();
        assert_eq!(p.hash, p.modules[0].hash);
        assert!(p.lookup(":=", 2).is_some());
        assert!(p.lookup("export_reader", 2).is_some());
    }

    #[test]
    fn unknown_guard_is_load_error() {
        assert!(matches!(Program::from_source("m", "p(X) :- frob(X) | true."), Err(GlpError::Load(_))));
        assert!(matches!(Program::from_source("m", "p(X) :- ground(X, X) | true."), Err(GlpError::Load(_))));
    }

    #[test]
    fn unit_guard_predicates_allowed() {
        let p = Program::from_source("m", "color(red).\ncolor(blue).\np(X) :- color(X?) | q.\nq.\n");
        assert!(p.is_ok());
        let p = Program::from_source("m", "color(X) :- q(X).\np(X) :- color(X?) | q(a).\nq(_).\n");
        assert!(p.is_err());
    }

    #[test]
    fn writer_violations_refused() {
        assert!(Program::from_source("m", "eq(X,X).").is_err());
        assert!(matches!(
            Program::new(vec![Module::parse("a", "p.").unwrap(), Module::parse("a", "q.").unwrap()]),
            Err(GlpError::DuplicateModule(_))
        ));
    }
}
