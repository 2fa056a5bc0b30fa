//! Binding store: single-assignment bindings keyed by pair id.
//!
//! A writer binding `X := T` is stored once under the pair id; the reader
//! `X?` dereferences through the same entry, which is how the reader
//! counterpart is realized without rewriting the resolvent.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::GlpError;
use crate::term::{Polarity, Term, Var};

/// Read access to bindings. Implemented by the store and by tentative
/// overlays used while a clause attempt is in progress.
pub trait Bindings {
    fn lookup(&self, id: u64) -> Option<&Term>;

    /// Follow variable bindings until an unbound variable or a non-variable.
    /// A reader sees the writer's value with `?` applied, which only
    /// changes a value that is itself a writer.
    fn deref(&self, t: &Term) -> Term {
        let mut cur = t.clone();
        let mut hops = 0usize;
        while let Term::Var(v) = cur {
            match self.lookup(v.id) {
                Some(next) => {
                    cur = if v.is_reader() { next.question() } else { next.clone() };
                    hops += 1;
                    if hops > 10_000_000 {
                        panic!("dereference cycle at {v}");
                    }
                }
                None => break,
            }
        }
        cur
    }

    /// Apply all bindings, producing a term whose variables are all unbound.
    fn resolve(&self, t: &Term) -> Result<Term, GlpError> {
        let mut path = Vec::new();
        resolve_in(self, t, &mut path)
    }

    /// Unbound variable halves reachable from `t`, in order of occurrence.
    fn free_vars(&self, t: &Term) -> Vec<Var> {
        let mut out = Vec::new();
        let mut stack = vec![t.clone()];
        while let Some(cur) = stack.pop() {
            match self.deref(&cur) {
                Term::Var(v) => out.push(v),
                Term::Cmp(c) => {
                    for a in c.args.iter().rev() {
                        stack.push(a.clone());
                    }
                }
                _ => {}
            }
        }
        out
    }

    fn classify(&self, t: &Term) -> Status {
        match self.deref(t) {
            Term::Var(v) if v.is_writer() => Status::UnboundWriter,
            Term::Var(_) => Status::UnboundReader,
            other => {
                if self.free_vars(&other).is_empty() {
                    Status::Ground
                } else {
                    Status::KnownNonGround
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ground,
    KnownNonGround,
    UnboundWriter,
    UnboundReader,
}

fn resolve_in<B: Bindings + ?Sized>(b: &B, t: &Term, path: &mut Vec<u64>) -> Result<Term, GlpError> {
    match t {
        Term::Var(v) => match b.lookup(v.id) {
            None => Ok(t.clone()),
            Some(next) => {
                if path.contains(&v.id) {
                    return Err(GlpError::Corruption(format!("circular binding through {v}")));
                }
                path.push(v.id);
                let r = resolve_in(b, next, path);
                path.pop();
                r.map(|r| if v.is_reader() { r.question() } else { r })
            }
        },
        Term::Cmp(c) => {
            if let Some((h, tl)) = t.as_cons() {
                let mut items = vec![resolve_in(b, h, path)?];
                // walk the spine iteratively, remembering how many ids we pushed
                let mut pushed = 0usize;
                let mut tail = tl.clone();
                loop {
                    let next = match &tail {
                        Term::Var(v) => match b.lookup(v.id) {
                            Some(n) => {
                                if path.contains(&v.id) {
                                    return Err(GlpError::Corruption(format!("circular binding through {v}")));
                                }
                                path.push(v.id);
                                pushed += 1;
                                if v.is_reader() { n.question() } else { n.clone() }
                            }
                            None => break,
                        },
                        cell => match cell.as_cons() {
                            Some((h2, t2)) => {
                                items.push(resolve_in(b, h2, path)?);
                                t2.clone()
                            }
                            None => break,
                        },
                    };
                    tail = next;
                }
                let tail = resolve_in(b, &tail, path)?;
                for _ in 0..pushed {
                    path.pop();
                }
                return Ok(Term::list(items, tail));
            }
            let mut args = Vec::with_capacity(c.args.len());
            for a in &c.args {
                args.push(resolve_in(b, a, path)?);
            }
            Ok(Term::cmp_arc(c.functor.clone(), args))
        }
        _ => Ok(t.clone()),
    }
}

/// Monotone id source shared by everything that creates variables in one run.
#[derive(Debug, Clone)]
pub struct IdGen {
    next: u64,
}

impl Default for IdGen {
    fn default() -> Self {
        IdGen { next: 1 }
    }
}

impl IdGen {
    pub fn starting_at(next: u64) -> IdGen {
        IdGen { next }
    }

    pub fn peek(&self) -> u64 {
        self.next
    }

    /// Reserve `n` consecutive ids and return the first.
    pub fn take(&mut self, n: u64) -> u64 {
        let base = self.next;
        self.next += n;
        base
    }

    pub fn fresh(&mut self) -> u64 {
        self.take(1)
    }
}

/// Returns the writer and reader over a new pair.
pub fn fresh_pair(ids: &mut IdGen) -> (Term, Term) {
    let id = ids.fresh();
    (Term::writer(id), Term::reader(id))
}

#[derive(Debug, Clone, Default)]
pub struct Store {
    bindings: HashMap<u64, Term>,
    abandoned: BTreeSet<Var>,
    names: BTreeMap<u64, String>,
}

impl Bindings for Store {
    fn lookup(&self, id: u64) -> Option<&Term> {
        self.bindings.get(&id)
    }
}

impl Store {
    pub fn new() -> Store {
        Store::default()
    }

    pub fn is_bound(&self, id: u64) -> bool {
        self.bindings.contains_key(&id)
    }

    /// Record `id := value`. Rebinding is a single-assignment violation.
    pub fn bind(&mut self, id: u64, value: Term) -> Result<(), GlpError> {
        if let Some(old) = self.bindings.get(&id) {
            return Err(GlpError::Corruption(format!("_W{id} rebound (was {old}, now {value})")));
        }
        if value.var().map(|v| v.id) == Some(id) {
            return Err(GlpError::Corruption(format!("_W{id} bound to itself")));
        }
        self.bindings.insert(id, value);
        Ok(())
    }

    pub fn binding_count(&self) -> usize {
        self.bindings.len()
    }

    pub fn abandon(&mut self, v: Var) -> bool {
        self.abandoned.insert(v)
    }

    pub fn is_abandoned(&self, v: Var) -> bool {
        self.abandoned.contains(&v)
    }

    pub fn abandoned(&self) -> impl Iterator<Item = &Var> {
        self.abandoned.iter()
    }

    pub fn set_name(&mut self, id: u64, name: &str) {
        self.names.insert(id, name.to_string());
    }

    pub fn name_of(&self, id: u64) -> Option<&str> {
        self.names.get(&id).map(|s| s.as_str())
    }

    pub fn polarity_name(v: Var) -> &'static str {
        match v.pol {
            Polarity::Writer => "writer",
            Polarity::Reader => "reader",
        }
    }
}

/// Store plus a tentative layer of bindings that has not been committed.
pub struct Overlay<'a> {
    pub base: &'a dyn Bindings,
    pub extra: &'a HashMap<u64, Term>,
}

impl Bindings for Overlay<'_> {
    fn lookup(&self, id: u64) -> Option<&Term> {
        self.extra.get(&id).or_else(|| self.base.lookup(id))
    }
}

/// Bindings held in a plain map, used by oracles and tests.
impl Bindings for HashMap<u64, Term> {
    fn lookup(&self, id: u64) -> Option<&Term> {
        self.get(&id)
    }
}
