//! Single-agent scheduler: FIFO active queue, suspended goals indexed by the
//! readers they wait on, and the failed set.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use crate::error::GlpError;
use crate::parser::Clause;
use crate::program::{is_goal_builtin, Procedure, Program};
use crate::store::{Bindings, IdGen, Overlay, Store};
use crate::term::{Number, Term, Var};
use crate::trace::Record;
use crate::unify::{unify_equations, writer_unify, FailReason, Tiers, UnifyOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Success,
    Deadlock,
    Failed,
    FuelExhausted,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Success => "quiescent-success",
            RunStatus::Deadlock => "deadlock",
            RunStatus::Failed => "failed",
            RunStatus::FuelExhausted => "fuel-exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Reduced,
    Suspended,
    Failed(String),
}

/// What one reduction did, for the multiagent layer.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub gid: u64,
    pub outcome: StepOutcome,
    /// Pair ids assigned by this step.
    pub bound: Vec<u64>,
    /// Variable halves that disappeared unassigned.
    pub vanished: Vec<Var>,
    pub blockers: BTreeSet<u64>,
    pub new_goals: Vec<u64>,
}

/// Result of trying one clause on a goal.
#[derive(Debug, Clone)]
pub enum Attempt {
    Commit { bindings: Vec<(u64, Term)>, body: Vec<Term>, units: Vec<(usize, u64)>, used: u64 },
    Suspend(BTreeSet<u64>),
    Fail(FailReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Round {
    Failed,
    Suspended,
}

enum Guard {
    Ok(Vec<(u64, Term)>),
    Suspend(BTreeSet<u64>),
    Fail(FailReason),
}

/// Read-only context a clause attempt needs besides the store.
pub struct Context<'a> {
    pub program: &'a Program,
    pub step: u64,
    pub module_hash: &'a str,
    pub provenance: &'a [(Term, Term)],
}

/// Try `clause` on the resolved goal `goal`, renaming at `base`.
/// `earlier` are the outcomes of the clauses before it in this round.
pub fn try_clause(
    ctx: &Context,
    store: &dyn Bindings,
    goal: &Term,
    clause: &Clause,
    base: u64,
    earlier: &[Round],
) -> Attempt {
    let renamed = clause.rename(base);
    let tiers = Tiers { clause_base: base, guard_base: base + clause.nvars };
    let mut tentative: HashMap<u64, Term> = HashMap::new();
    match unify_equations(&[(goal.clone(), renamed.head.clone())], store, tiers) {
        UnifyOutcome::Success(b) => tentative.extend(b),
        UnifyOutcome::Suspend(w) => return Attempt::Suspend(w),
        UnifyOutcome::Fail(r) => return Attempt::Fail(r),
    }
    let mut next = base + clause.nvars;
    let mut units = Vec::new();
    let mut blockers = BTreeSet::new();
    let mut suspended = false;
    for g in &renamed.guard {
        let view = Overlay { base: store, extra: &tentative };
        match eval_guard(ctx, &view, g, tiers, &mut next, &mut units, earlier) {
            Guard::Ok(b) => tentative.extend(b),
            Guard::Suspend(w) => {
                suspended = true;
                blockers.extend(w);
            }
            Guard::Fail(r) => return Attempt::Fail(r),
        }
    }
    if suspended {
        return Attempt::Suspend(blockers);
    }
    let view = Overlay { base: store, extra: &tentative };
    let mut bindings: Vec<(u64, Term)> = tentative
        .keys()
        .map(|&id| (id, view.resolve(&Term::writer(id)).expect("tentative bindings are acyclic")))
        .collect();
    bindings.sort_by_key(|(id, _)| *id);
    let body = renamed.body.iter().map(|b| view.resolve(b).expect("acyclic")).collect();
    Attempt::Commit { bindings, body, units, used: next - base }
}

fn readers_of(store: &dyn Bindings, t: &Term) -> (BTreeSet<u64>, bool) {
    let mut readers = BTreeSet::new();
    let mut writers = false;
    for v in store.free_vars(t) {
        if v.is_reader() {
            readers.insert(v.id);
        } else {
            writers = true;
        }
    }
    (readers, writers)
}

fn eval_guard(
    ctx: &Context,
    store: &dyn Bindings,
    g: &Term,
    tiers: Tiers,
    next: &mut u64,
    units: &mut Vec<(usize, u64)>,
    earlier: &[Round],
) -> Guard {
    let (name, arity) = g.functor().expect("guard is callable");
    let args = g.args();
    let tiers_here = Tiers { clause_base: tiers.clause_base, guard_base: tiers.guard_base };
    match (name, arity) {
        ("true", 0) => Guard::Ok(vec![]),
        ("ground", 1) => {
            let (readers, _) = readers_of(store, &args[0]);
            let free = store.free_vars(&args[0]);
            if free.is_empty() {
                Guard::Ok(vec![])
            } else if readers.is_empty() {
                Guard::Fail(FailReason::ReaderNeedsValue)
            } else {
                Guard::Suspend(readers)
            }
        }
        ("known", 1) => match store.deref(&args[0]) {
            Term::Var(v) if v.is_reader() => Guard::Suspend([v.id].into()),
            Term::Var(_) => Guard::Fail(FailReason::ReaderNeedsValue),
            _ => Guard::Ok(vec![]),
        },
        ("unknown", 1) => ok_if(store.deref(&args[0]).is_var()),
        ("writer", 1) => ok_if(matches!(store.deref(&args[0]), Term::Var(v) if v.is_writer())),
        ("reader", 1) => ok_if(matches!(store.deref(&args[0]), Term::Var(v) if v.is_reader())),
        ("otherwise", 0) => {
            if earlier.iter().all(|r| *r == Round::Failed) {
                Guard::Ok(vec![])
            } else {
                // the earlier suspensions already carry their blockers
                Guard::Suspend(BTreeSet::new())
            }
        }
        ("=", 2) => from_unify(unify_equations(&[(args[0].clone(), args[1].clone())], store, tiers_here)),
        ("=\\=", 2) => match unify_equations(&[(args[0].clone(), args[1].clone())], store, tiers_here) {
            UnifyOutcome::Success(_) => Guard::Fail(FailReason::Clash),
            UnifyOutcome::Suspend(w) => Guard::Suspend(w),
            UnifyOutcome::Fail(_) => Guard::Ok(vec![]),
        },
        ("<", 2) | (">", 2) | ("=<", 2) | (">=", 2) | ("=:=", 2) => {
            let a = eval_arith(store, &args[0]);
            let b = eval_arith(store, &args[1]);
            match (a, b) {
                (Ok(x), Ok(y)) => {
                    let holds = match name {
                        "<" => x < y,
                        ">" => x > y,
                        "=<" => x <= y,
                        ">=" => x >= y,
                        _ => x == y,
                    };
                    ok_if(holds)
                }
                (Err(Arith::Error), _) | (_, Err(Arith::Error)) => Guard::Fail(FailReason::Clash),
                (a, b) => {
                    let mut w = BTreeSet::new();
                    for r in [a, b] {
                        if let Err(Arith::Blocked(ids)) = r {
                            w.extend(ids);
                        }
                    }
                    if w.is_empty() {
                        Guard::Fail(FailReason::ReaderNeedsValue)
                    } else {
                        Guard::Suspend(w)
                    }
                }
            }
        }
        ("attestation", 2) => {
            let x = match store.resolve(&args[0]) {
                Ok(x) => x,
                Err(_) => return Guard::Fail(FailReason::Cycle),
            };
            if x.is_var() {
                return Guard::Fail(FailReason::ReaderNeedsValue);
            }
            let info = ctx
                .provenance
                .iter()
                .rev()
                .find(|(t, _)| store.resolve(t).map(|r| r == x).unwrap_or(false))
                .map(|(_, a)| a.clone())
                .unwrap_or_else(|| Term::cmp("att", vec![Term::atom("self"), Term::atom(ctx.module_hash)]));
            from_unify(unify_equations(&[(args[1].clone(), info)], store, tiers_here))
        }
        ("module", 1) => {
            from_unify(unify_equations(&[(args[0].clone(), Term::atom(ctx.module_hash))], store, tiers_here))
        }
        _ => {
            let Some(proc) = ctx.program.lookup(name, arity) else {
                return Guard::Fail(FailReason::Clash);
            };
            let mut blockers = BTreeSet::new();
            for (i, c) in proc.clauses.iter().enumerate() {
                let base = *next;
                let head = c.rename(base).head;
                let t = Tiers { clause_base: tiers.clause_base, guard_base: tiers.guard_base };
                match unify_equations(&[(g.clone(), head)], store, t) {
                    UnifyOutcome::Success(b) => {
                        *next += c.nvars;
                        units.push((i, base));
                        return Guard::Ok(b);
                    }
                    UnifyOutcome::Suspend(w) => blockers.extend(w),
                    UnifyOutcome::Fail(_) => {}
                }
            }
            if blockers.is_empty() {
                Guard::Fail(FailReason::Clash)
            } else {
                Guard::Suspend(blockers)
            }
        }
    }
}

fn ok_if(b: bool) -> Guard {
    if b {
        Guard::Ok(vec![])
    } else {
        Guard::Fail(FailReason::Clash)
    }
}

fn from_unify(u: UnifyOutcome) -> Guard {
    match u {
        UnifyOutcome::Success(b) => Guard::Ok(b),
        UnifyOutcome::Suspend(w) => Guard::Suspend(w),
        UnifyOutcome::Fail(r) => Guard::Fail(r),
    }
}

#[derive(Debug)]
pub enum Arith {
    /// Unbound readers (the writer-only case carries an empty set).
    Blocked(BTreeSet<u64>),
    Error,
}

pub fn eval_arith(store: &dyn Bindings, e: &Term) -> Result<Number, Arith> {
    match store.deref(e) {
        Term::Num(n) => Ok(n),
        Term::Var(v) => Err(Arith::Blocked(if v.is_reader() { [v.id].into() } else { BTreeSet::new() })),
        Term::Atom(_) => Err(Arith::Error),
        t @ Term::Cmp(_) => {
            let (name, arity) = t.functor().unwrap();
            let args = t.args();
            if arity == 1 && name == "-" {
                return eval_arith(store, &args[0]).map(|n| n.neg());
            }
            if arity != 2 {
                return Err(Arith::Error);
            }
            let a = eval_arith(store, &args[0]);
            let b = eval_arith(store, &args[1]);
            let (x, y) = match (a, b) {
                (Ok(x), Ok(y)) => (x, y),
                (Err(Arith::Error), _) | (_, Err(Arith::Error)) => return Err(Arith::Error),
                (Err(Arith::Blocked(mut w)), Err(Arith::Blocked(w2))) => {
                    w.extend(w2);
                    return Err(Arith::Blocked(w));
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
            match name {
                "+" => Ok(x.add(&y)),
                "-" => Ok(x.sub(&y)),
                "*" => Ok(x.mul(&y)),
                "/" => x.div(&y).map_err(|_| Arith::Error),
                "mod" => x.rem(&y).map_err(|_| Arith::Error),
                _ => Err(Arith::Error),
            }
        }
    }
}

/// Format a list of terms as a canonical list.
pub fn term_list(items: &[Term]) -> String {
    Term::list(items.to_vec(), Term::nil()).to_string()
}

fn var_list(vs: &[Var]) -> String {
    term_list(&vs.iter().map(|v| Term::Var(*v)).collect::<Vec<_>>())
}

fn id_list(ids: impl IntoIterator<Item = u64>) -> String {
    let parts: Vec<String> = ids.into_iter().map(|i| i.to_string()).collect();
    format!("[{}]", parts.join(","))
}

#[derive(Debug, Clone)]
pub struct Engine {
    pub program: Arc<Program>,
    pub store: Store,
    pub ids: IdGen,
    /// Logical clock reported by current_time/1.
    pub step: u64,
    pub agent: String,
    pub module_hash: String,
    /// Received terms with the attestation they arrived under.
    pub provenance: Vec<(Term, Term)>,
    pub trace: Vec<Record>,
    queue: VecDeque<u64>,
    goals: BTreeMap<u64, Term>,
    suspended: BTreeMap<u64, BTreeSet<u64>>,
    waiters: HashMap<u64, BTreeSet<u64>>,
    failed: Vec<(u64, Term, String)>,
    next_gid: u64,
}

impl Engine {
    pub fn new(program: Arc<Program>) -> Engine {
        let module_hash = program.hash.clone();
        Engine {
            program,
            store: Store::new(),
            ids: IdGen::default(),
            step: 0,
            agent: "main".into(),
            module_hash,
            provenance: Vec::new(),
            trace: Vec::new(),
            queue: VecDeque::new(),
            goals: BTreeMap::new(),
            suspended: BTreeMap::new(),
            waiters: HashMap::new(),
            failed: Vec::new(),
            next_gid: 1,
        }
    }

    /// Append a goal to the active queue and return its goal id.
    pub fn add_goal(&mut self, goal: Term) -> u64 {
        let gid = self.next_gid;
        self.next_gid += 1;
        self.goals.insert(gid, goal);
        self.queue.push_back(gid);
        gid
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn has_active(&self) -> bool {
        !self.queue.is_empty()
    }

    pub fn active(&self) -> impl Iterator<Item = (u64, &Term)> {
        self.queue.iter().map(move |g| (*g, &self.goals[g]))
    }

    pub fn suspended(&self) -> impl Iterator<Item = (u64, &Term, &BTreeSet<u64>)> {
        self.suspended.iter().map(move |(g, w)| (*g, &self.goals[g], w))
    }

    pub fn failed(&self) -> &[(u64, Term, String)] {
        &self.failed
    }

    pub fn goal(&self, gid: u64) -> Option<&Term> {
        self.goals.get(&gid)
    }

    /// Live goals (active then suspended) with their ids.
    pub fn live_goals(&self) -> Vec<(u64, Term)> {
        let mut v: Vec<(u64, Term)> = self.queue.iter().map(|g| (*g, self.goals[g].clone())).collect();
        v.extend(self.suspended.keys().map(|g| (*g, self.goals[g].clone())));
        v
    }

    pub fn status(&self) -> RunStatus {
        if !self.failed.is_empty() {
            RunStatus::Failed
        } else if !self.queue.is_empty() {
            RunStatus::FuelExhausted
        } else if !self.suspended.is_empty() {
            RunStatus::Deadlock
        } else {
            RunStatus::Success
        }
    }

    fn wake(&mut self, id: u64) -> Vec<u64> {
        let mut woken = Vec::new();
        if let Some(gs) = self.waiters.remove(&id) {
            for g in gs {
                if self.suspended.remove(&g).is_some() {
                    self.queue.push_back(g);
                    woken.push(g);
                }
            }
        }
        woken
    }

    /// Bind a reader's pair from outside (a delivered assignment).
    pub fn assign_reader(&mut self, id: u64, value: Term) -> Result<Vec<u64>, GlpError> {
        self.store.bind(id, value)?;
        Ok(self.wake(id))
    }

    /// Mark a reader abandoned and wake whoever waits on it.
    pub fn abandon_reader(&mut self, id: u64) -> Vec<u64> {
        self.store.abandon(Var::reader(id));
        self.wake(id)
    }

    pub fn ctx(&self) -> Context<'_> {
        Context { program: &self.program, step: self.step, module_hash: &self.module_hash, provenance: &self.provenance }
    }

    /// Run until no goal is active or `fuel` reductions have been made.
    pub fn run(&mut self, fuel: u64) -> Result<RunStatus, GlpError> {
        let mut spent = 0;
        while self.has_active() && spent < fuel {
            self.step += 1;
            self.reduce_step()?;
            spent += 1;
        }
        Ok(self.status())
    }

    fn fail_goal(&mut self, gid: u64, goal: &Term, reason: &str, report: &mut StepReport) {
        let mut seen = BTreeSet::new();
        for v in self.store.free_vars(goal) {
            if seen.insert(v) {
                report.vanished.push(v);
            }
        }
        let wake = self.vanish(&report.vanished.clone());
        self.failed.push((gid, goal.clone(), reason.to_string()));
        report.outcome = StepOutcome::Failed(reason.to_string());
        let mut r = Record::new(self.step, &self.agent, "fail")
            .with("gid", gid.to_string())
            .with("goal", goal.to_string())
            .with("reason", reason);
        r.push("abandoned", var_list(&report.vanished));
        r.push("wake", id_list(wake));
        self.trace.push(r);
    }

    /// Mark the partners of vanished halves abandoned; returns woken goals.
    fn vanish(&mut self, vs: &[Var]) -> Vec<u64> {
        let mut woken = Vec::new();
        for v in vs {
            self.store.abandon(v.paired());
            if v.is_writer() {
                woken.extend(self.wake(v.id));
            }
        }
        woken
    }

    /// Pop the next active goal and reduce, suspend or fail it.
    pub fn reduce_step(&mut self) -> Result<Option<StepReport>, GlpError> {
        let Some(gid) = self.queue.pop_front() else { return Ok(None) };
        let raw = self.goals[&gid].clone();
        let goal = self.store.resolve(&raw)?;
        self.goals.insert(gid, goal.clone());
        let mut report = StepReport {
            gid,
            outcome: StepOutcome::Reduced,
            bound: vec![],
            vanished: vec![],
            blockers: BTreeSet::new(),
            new_goals: vec![],
        };
        let Some((name, arity)) = goal.functor() else {
            self.fail_goal(gid, &goal, "not_callable", &mut report);
            return Ok(Some(report));
        };
        let (name, arity) = (name.to_string(), arity);
        if let Some(p) = self.program.lookup(&name, arity).cloned() {
            self.reduce_with(gid, &goal, &p, report).map(Some)
        } else if is_goal_builtin(&name, arity) {
            self.builtin(gid, &goal, &name, report).map(Some)
        } else {
            self.fail_goal(gid, &goal, "unknown_procedure", &mut report);
            Ok(Some(report))
        }
    }

    fn reduce_with(&mut self, gid: u64, goal: &Term, p: &Procedure, mut report: StepReport) -> Result<StepReport, GlpError> {
        let base = self.ids.peek();
        let mut rounds = Vec::new();
        let mut blockers = BTreeSet::new();
        let mut abandoned_only = false;
        let mut last_fail = FailReason::Clash;
        for (i, c) in p.clauses.iter().enumerate() {
            let attempt = try_clause(&self.ctx(), &self.store, goal, c, base, &rounds);
            match attempt {
                Attempt::Commit { bindings, body, units, used } => {
                    self.ids.take(used);
                    let clause = format!("{}", i + 1);
                    return self.commit(gid, goal, &format!("{}/{}", crate::parser::atom_text(&p.name), p.arity), &clause, base, units, bindings, body, report);
                }
                Attempt::Suspend(w) => {
                    let live: BTreeSet<u64> = w
                        .iter()
                        .copied()
                        .filter(|id| *id < base && !self.store.is_abandoned(Var::reader(*id)))
                        .collect();
                    if live.is_empty() {
                        abandoned_only |= w.iter().any(|id| *id < base);
                        rounds.push(Round::Failed);
                        last_fail = FailReason::ReaderNeedsValue;
                    } else {
                        blockers.extend(live);
                        rounds.push(Round::Suspended);
                    }
                }
                Attempt::Fail(r) => {
                    rounds.push(Round::Failed);
                    last_fail = r;
                }
            }
        }
        if blockers.is_empty() {
            let reason = if abandoned_only { "abandoned" } else { last_fail.as_str() };
            self.fail_goal(gid, goal, reason, &mut report);
            return Ok(report);
        }
        self.suspend(gid, goal, blockers, &mut report);
        Ok(report)
    }

    fn suspend(&mut self, gid: u64, goal: &Term, blockers: BTreeSet<u64>, report: &mut StepReport) {
        for id in &blockers {
            self.waiters.entry(*id).or_default().insert(gid);
        }
        let on: Vec<Term> = blockers.iter().map(|id| Term::reader(*id)).collect();
        self.trace.push(
            Record::new(self.step, &self.agent, "suspend")
                .with("gid", gid.to_string())
                .with("goal", goal.to_string())
                .with("on", term_list(&on)),
        );
        report.blockers = blockers.clone();
        report.outcome = StepOutcome::Suspended;
        self.suspended.insert(gid, blockers);
    }

    #[allow(clippy::too_many_arguments)]
    fn commit(
        &mut self,
        gid: u64,
        goal: &Term,
        proc: &str,
        clause: &str,
        base: u64,
        units: Vec<(usize, u64)>,
        bindings: Vec<(u64, Term)>,
        body: Vec<Term>,
        mut report: StepReport,
    ) -> Result<StepReport, GlpError> {
        let before = self.store.free_vars(goal);
        let mut wake = Vec::new();
        for (id, value) in &bindings {
            self.store.bind(*id, value.clone())?;
        }
        for (id, _) in &bindings {
            if *id < base {
                report.bound.push(*id);
                wake.extend(self.wake(*id));
            }
        }
        let body: Vec<Term> = body.iter().map(|b| self.store.resolve(b)).collect::<Result<_, _>>()?;
        // halves of the goal that are still unbound but went nowhere
        let mut kept = BTreeSet::new();
        for b in &body {
            b.for_each_var(&mut |v| {
                kept.insert(v);
            });
        }
        for (id, value) in &bindings {
            if *id < base {
                value.for_each_var(&mut |v| {
                    kept.insert(v);
                });
            }
        }
        let mut vanished = Vec::new();
        let mut seen = BTreeSet::new();
        for v in before {
            if !seen.insert(v) || self.store.is_bound(v.id) || kept.contains(&v) {
                continue;
            }
            vanished.push(v);
        }
        wake.extend(self.vanish(&vanished));
        let mut gids = Vec::new();
        for b in &body {
            if b.is_atom("true") {
                continue;
            }
            gids.push(self.add_goal(b.clone()));
        }
        // woken goals go after the body
        for g in &wake {
            if let Some(pos) = self.queue.iter().position(|x| x == g) {
                self.queue.remove(pos);
                self.queue.push_back(*g);
            }
        }
        let sigma: Vec<Term> = bindings.iter().map(|(id, t)| Term::cmp("bind", vec![Term::writer(*id), t.clone()])).collect();
        let unit_terms: Vec<Term> =
            units.iter().map(|(i, b)| Term::cmp("unit", vec![Term::int(*i as i64 + 1), Term::int(*b as i64)])).collect();
        let mut r = Record::new(self.step, &self.agent, "reduce")
            .with("gid", gid.to_string())
            .with("goal", goal.to_string())
            .with("proc", proc)
            .with("clause", clause)
            .with("rename", base.to_string());
        r.push("units", term_list(&unit_terms));
        r.push("sigma", term_list(&sigma));
        r.push("body", term_list(&body.iter().filter(|b| !b.is_atom("true")).cloned().collect::<Vec<_>>()));
        r.push("gids", id_list(gids.iter().copied()));
        r.push("wake", id_list(wake.iter().copied()));
        r.push("abandoned", var_list(&vanished));
        self.trace.push(r);
        report.vanished = vanished;
        report.new_goals = gids;
        report.outcome = StepOutcome::Reduced;
        Ok(report)
    }

    fn builtin(&mut self, gid: u64, goal: &Term, name: &str, mut report: StepReport) -> Result<StepReport, GlpError> {
        let args = goal.args().to_vec();
        let base = self.ids.peek();
        let proc = format!("{}/{}", crate::parser::atom_text(name), args.len());
        let outcome = match name {
            "true" => UnifyOutcome::Success(vec![]),
            "=" => writer_unify(&args[0], &args[1], &self.store),
            "evaluate" => match eval_arith(&self.store, &args[0]) {
                Ok(n) => writer_unify(&args[1], &Term::Num(n), &self.store),
                Err(Arith::Blocked(w)) if !w.is_empty() => UnifyOutcome::Suspend(w),
                Err(Arith::Blocked(_)) => UnifyOutcome::Fail(FailReason::ReaderNeedsValue),
                Err(Arith::Error) => {
                    self.fail_goal(gid, goal, "arithmetic", &mut report);
                    return Ok(report);
                }
            },
            "current_time" => writer_unify(&args[0], &Term::int(self.step as i64), &self.store),
            "variable_name" => match self.store.deref(&args[0]) {
                Term::Var(v) => writer_unify(&args[1], &Term::atom(&format!("_W{}", v.id)), &self.store),
                _ => UnifyOutcome::Fail(FailReason::Clash),
            },
            _ => UnifyOutcome::Fail(FailReason::Clash),
        };
        match outcome {
            UnifyOutcome::Success(b) => self.commit(gid, goal, &proc, "builtin", base, vec![], b, vec![], report),
            UnifyOutcome::Suspend(w) => {
                let live: BTreeSet<u64> = w.into_iter().filter(|id| !self.store.is_abandoned(Var::reader(*id))).collect();
                if live.is_empty() {
                    self.fail_goal(gid, goal, "abandoned", &mut report);
                } else {
                    self.suspend(gid, goal, live, &mut report);
                }
                Ok(report)
            }
            UnifyOutcome::Fail(r) => {
                self.fail_goal(gid, goal, r.as_str(), &mut report);
                Ok(report)
            }
        }
    }
}

/// Split a conjunction `a, b, c` into goals.
pub fn conjuncts(t: &Term) -> Vec<Term> {
    let mut out = Vec::new();
    let mut cur = t.clone();
    loop {
        match &cur {
            Term::Cmp(c) if &*c.functor == "," && c.args.len() == 2 => {
                out.push(c.args[0].clone());
                let rest = c.args[1].clone();
                cur = rest;
            }
            _ => {
                out.push(cur);
                return out;
            }
        }
    }
}

/// Halves occurring more than once across `goals`.
pub fn srsw_duplicates(goals: &[Term]) -> Vec<Var> {
    let mut counts: BTreeMap<Var, usize> = BTreeMap::new();
    for g in goals {
        g.for_each_var(&mut |v| *counts.entry(v).or_default() += 1);
    }
    counts.into_iter().filter(|(_, n)| *n > 1).map(|(v, _)| v).collect()
}
