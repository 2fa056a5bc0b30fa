//! Writer unification.
//!
//! A regular most general unifier is computed with readers and writers kept
//! apart, then inspected: it is a writer mgu only if no reader got bound,
//! no old writer ends up aliased to another unbound writer, and no writer's
//! value mentions its own reader. Readers bound to non-variables are the
//! ones a suspended goal waits on.

use std::collections::{BTreeSet, HashMap};

use crate::store::Bindings;
use crate::term::{Term, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FailReason {
    Clash,
    Cycle,
    WriterWriter,
    ReaderNeedsValue,
}

impl FailReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailReason::Clash => "clash",
            FailReason::Cycle => "cycle",
            FailReason::WriterWriter => "writer_writer",
            FailReason::ReaderNeedsValue => "reader_needs_value",
        }
    }

    pub fn parse(s: &str) -> Option<FailReason> {
        Some(match s {
            "clash" => FailReason::Clash,
            "cycle" => FailReason::Cycle,
            "writer_writer" => FailReason::WriterWriter,
            "reader_needs_value" => FailReason::ReaderNeedsValue,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UnifyOutcome {
    /// Writer bindings `(pair id, value)`, values fully resolved.
    Success(Vec<(u64, Term)>),
    /// Pair ids of readers that need a value first.
    Suspend(BTreeSet<u64>),
    Fail(FailReason),
}

/// Age classes of variables for writer-to-writer aliasing. Ids below
/// `clause_base` predate the clause attempt; ids from `clause_base` up to
/// `guard_base` belong to the renamed clause; ids above belong to units
/// renamed while evaluating guards.
#[derive(Debug, Clone, Copy)]
pub struct Tiers {
    pub clause_base: u64,
    pub guard_base: u64,
}

impl Tiers {
    /// Every variable is old: plain writer unification.
    pub const NONE: Tiers = Tiers { clause_base: u64::MAX, guard_base: u64::MAX };

    pub fn tier(&self, id: u64) -> u8 {
        if id < self.clause_base {
            0
        } else if id < self.guard_base {
            1
        } else {
            2
        }
    }
}

struct Mgu<'a> {
    store: &'a dyn Bindings,
    local: HashMap<Var, Term>,
    tiers: Tiers,
    reader_reader: bool,
    /// Reader-to-value equations held back until the writers are known.
    deferred: Vec<(Var, Term)>,
}

impl Mgu<'_> {
    fn deref(&self, t: &Term) -> Term {
        let mut cur = t.clone();
        while let Term::Var(v) = cur {
            if let Some(next) = self.local.get(&v) {
                cur = next.clone();
            } else if let Some(next) = self.local.get(&v.paired()).filter(|_| v.is_reader()) {
                // a reader sees its writer's binding from this same mgu
                cur = next.question();
            } else if let Some(next) = self.store.lookup(v.id) {
                cur = if v.is_reader() { next.question() } else { next.clone() };
            } else {
                break;
            }
        }
        cur
    }

    fn occurs(&self, v: Var, t: &Term) -> bool {
        let mut stack = vec![t.clone()];
        while let Some(cur) = stack.pop() {
            match self.deref(&cur) {
                Term::Var(u) if u.id == v.id => return true,
                Term::Cmp(c) => stack.extend(c.args.iter().cloned()),
                _ => {}
            }
        }
        false
    }

    fn bind(&mut self, v: Var, t: Term) -> Result<(), FailReason> {
        if self.occurs(v, &t) {
            return Err(FailReason::Cycle);
        }
        self.local.insert(v, t);
        Ok(())
    }

    fn unify(&mut self, a: &Term, b: &Term) -> Result<(), FailReason> {
        let mut stack = vec![(a.clone(), b.clone())];
        while let Some((x, y)) = stack.pop() {
            let x = self.deref(&x);
            let y = self.deref(&y);
            if x == y {
                continue;
            }
            match (&x, &y) {
                (Term::Var(u), Term::Var(v)) => {
                    if u.is_reader() && v.is_reader() {
                        self.reader_reader = true;
                        self.bind(*u, y.clone())?;
                    } else if u.is_reader() {
                        self.bind(*v, x.clone())?;
                    } else if v.is_reader() {
                        self.bind(*u, y.clone())?;
                    } else {
                        // the younger writer becomes an alias of the older one
                        let (tu, tv) = (self.tiers.tier(u.id), self.tiers.tier(v.id));
                        if tv > tu {
                            self.bind(*v, x.clone())?;
                        } else {
                            self.bind(*u, y.clone())?;
                        }
                    }
                }
                (Term::Var(u), _) if u.is_reader() => self.deferred.push((*u, y.clone())),
                (_, Term::Var(v)) if v.is_reader() => self.deferred.push((*v, x.clone())),
                (Term::Var(u), _) => self.bind(*u, y.clone())?,
                (_, Term::Var(v)) => self.bind(*v, x.clone())?,
                (Term::Cmp(c), Term::Cmp(d)) => {
                    if c.functor != d.functor || c.args.len() != d.args.len() {
                        return Err(FailReason::Clash);
                    }
                    for (p, q) in c.args.iter().zip(d.args.iter()) {
                        stack.push((p.clone(), q.clone()));
                    }
                }
                _ => return Err(FailReason::Clash),
            }
        }
        Ok(())
    }

    /// Retry held-back reader equations; readers still unknown get bound,
    /// which marks them as needing a value.
    fn settle(&mut self) -> Result<(), FailReason> {
        loop {
            let pending = std::mem::take(&mut self.deferred);
            if pending.is_empty() {
                return Ok(());
            }
            let mut progress = false;
            let mut stuck = Vec::new();
            for (r, t) in pending {
                if self.deref(&Term::Var(r)).is_var() {
                    stuck.push((r, t));
                } else {
                    progress = true;
                    self.unify(&Term::Var(r), &t)?;
                }
            }
            if !progress {
                for (r, t) in stuck {
                    match self.deref(&Term::Var(r)) {
                        Term::Var(u) if u == r => self.bind(r, t)?,
                        other => self.unify(&other, &t)?,
                    }
                }
                return Ok(());
            }
            self.deferred.extend(stuck);
        }
    }

    fn resolve(&self, t: &Term) -> Term {
        match self.deref(t) {
            Term::Cmp(c) => Term::cmp_arc(c.functor.clone(), c.args.iter().map(|a| self.resolve(a)).collect()),
            other => other,
        }
    }

    fn finish(self) -> UnifyOutcome {
        let mut readers = Vec::new();
        let mut writers = Vec::new();
        let mut ww = self.reader_reader;
        let mut cycle = false;
        for v in self.local.keys() {
            let value = self.resolve(&Term::Var(*v));
            if v.is_reader() {
                readers.push((*v, value));
                continue;
            }
            if let Term::Var(u) = &value {
                if u.is_writer() && self.tiers.tier(v.id) == 0 {
                    ww = true;
                }
            }
            let mut own_reader = false;
            value.for_each_var(&mut |u| {
                if u.id == v.id {
                    own_reader = true;
                }
            });
            cycle |= own_reader;
            writers.push((v.id, value));
        }
        if readers.is_empty() && !ww && !cycle {
            writers.sort_by_key(|(id, _)| *id);
            return UnifyOutcome::Success(writers);
        }
        let blockers: BTreeSet<u64> = readers.iter().filter(|(_, t)| !t.is_var()).map(|(v, _)| v.id).collect();
        if !blockers.is_empty() {
            UnifyOutcome::Suspend(blockers)
        } else if cycle {
            UnifyOutcome::Fail(FailReason::Cycle)
        } else {
            UnifyOutcome::Fail(FailReason::WriterWriter)
        }
    }
}

/// Writer unification of two terms under the given bindings, all variables
/// treated as old.
pub fn writer_unify(a: &Term, b: &Term, store: &dyn Bindings) -> UnifyOutcome {
    unify_equations(&[(a.clone(), b.clone())], store, Tiers::NONE)
}

/// One combined writer mgu for a set of equations.
pub fn unify_equations(eqs: &[(Term, Term)], store: &dyn Bindings, tiers: Tiers) -> UnifyOutcome {
    let mut m = Mgu { store, local: HashMap::new(), tiers, reader_reader: false, deferred: Vec::new() };
    for (a, b) in eqs {
        if let Err(r) = m.unify(a, b) {
            return UnifyOutcome::Fail(r);
        }
    }
    if let Err(r) = m.settle() {
        return UnifyOutcome::Fail(r);
    }
    m.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_term;
    use crate::store::Store;

    fn eq(text: &str) -> UnifyOutcome {
        let q = parse_term(text).unwrap();
        let args = q.term.args();
        writer_unify(&args[0], &args[1], &Store::new())
    }

    #[test]
    fn definition_examples() {
        // X = a binds the writer
        assert_eq!(eq("X = a"), UnifyOutcome::Success(vec![(0, Term::atom("a"))]));
        // X? = a needs a value for the reader
        assert_eq!(eq("X? = a"), UnifyOutcome::Suspend([0].into()));
        // f(X, Y?) = f(a, b): suspends on Y?
        assert_eq!(eq("f(X,Y?) = f(a,b)"), UnifyOutcome::Suspend([1].into()));
        assert_eq!(eq("f(a) = g(a)"), UnifyOutcome::Fail(FailReason::Clash));
        assert_eq!(eq("X = f(X?)"), UnifyOutcome::Fail(FailReason::Cycle));
        assert_eq!(eq("X = Y"), UnifyOutcome::Fail(FailReason::WriterWriter));
        assert_eq!(eq("X? = Y?"), UnifyOutcome::Fail(FailReason::WriterWriter));
        assert_eq!(eq("X = Y?"), UnifyOutcome::Success(vec![(0, Term::reader(1))]));
        assert_eq!(eq("X = f(X)"), UnifyOutcome::Fail(FailReason::Cycle));
    }

    #[test]
    fn store_bindings_are_seen() {
        let mut s = Store::new();
        s.bind(0, Term::atom("a")).unwrap();
        assert_eq!(writer_unify(&Term::reader(0), &Term::atom("a"), &s), UnifyOutcome::Success(vec![]));
        assert_eq!(writer_unify(&Term::reader(0), &Term::atom("b"), &s), UnifyOutcome::Fail(FailReason::Clash));
    }

    #[test]
    fn fresh_writers_alias_old_ones() {
        let tiers = Tiers { clause_base: 10, guard_base: 20 };
        let out = unify_equations(&[(Term::writer(10), Term::writer(3))], &Store::new(), tiers);
        assert_eq!(out, UnifyOutcome::Success(vec![(10, Term::writer(3))]));
        let out = unify_equations(&[(Term::writer(3), Term::writer(4))], &Store::new(), tiers);
        assert_eq!(out, UnifyOutcome::Fail(FailReason::WriterWriter));
    }
}
