//! Naive rewrite interpreter: no binding store. Every substitution is
//! applied to the whole resolvent at once, readers receiving the writer's
//! value. Scheduling matches the engine (FIFO, woken goals after the body)
//! so the two traces can be compared step by step.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use crate::engine::{eval_arith, term_list, try_clause, Arith, Attempt, Context, Round};
use crate::parser::{atom_text, parse_term};
use crate::program::{is_goal_builtin, Program};
use crate::store::IdGen;
use crate::term::{Term, Var};
use crate::trace::Record;
use crate::unify::{writer_unify, FailReason, UnifyOutcome};

pub struct Rewriter {
    program: Arc<Program>,
    ids: IdGen,
    step: u64,
    queue: VecDeque<u64>,
    goals: BTreeMap<u64, Term>,
    suspended: BTreeMap<u64, BTreeSet<u64>>,
    abandoned: BTreeSet<Var>,
    next_gid: u64,
    pub trace: Vec<Record>,
}

fn var_list(vs: &[Var]) -> String {
    term_list(&vs.iter().map(|v| Term::Var(*v)).collect::<Vec<_>>())
}

fn id_list(ids: &[u64]) -> String {
    let parts: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
    format!("[{}]", parts.join(","))
}

/// Apply writer bindings to a term; readers get the value with `?` applied.
fn substitute(t: &Term, sigma: &HashMap<u64, Term>) -> Term {
    t.map_vars(&mut |v| match sigma.get(&v.id) {
        Some(val) if v.is_reader() => val.question(),
        Some(val) => val.clone(),
        None => Term::Var(v),
    })
}

fn distinct_vars(t: &Term) -> Vec<Var> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut stack = vec![t.clone()];
    while let Some(cur) = stack.pop() {
        match cur {
            Term::Var(v) => {
                if seen.insert(v) {
                    out.push(v)
                }
            }
            Term::Cmp(c) => stack.extend(c.args.iter().rev().cloned()),
            _ => {}
        }
    }
    out
}

impl Rewriter {
    pub fn new(program: Arc<Program>, goal: &str) -> Result<Rewriter, crate::GlpError> {
        let q = parse_term(goal)?;
        let mut r = Rewriter {
            program,
            ids: IdGen::default(),
            step: 0,
            queue: VecDeque::new(),
            goals: BTreeMap::new(),
            suspended: BTreeMap::new(),
            abandoned: BTreeSet::new(),
            next_gid: 1,
            trace: Vec::new(),
        };
        let base = r.ids.take(q.nvars());
        for g in crate::engine::conjuncts(&q.instantiate(base)) {
            r.add_goal(g);
        }
        Ok(r)
    }

    fn add_goal(&mut self, g: Term) -> u64 {
        let gid = self.next_gid;
        self.next_gid += 1;
        self.goals.insert(gid, g);
        self.queue.push_back(gid);
        gid
    }

    pub fn run(&mut self, fuel: u64) {
        let mut spent = 0;
        while spent < fuel {
            let Some(gid) = self.queue.pop_front() else { break };
            self.step += 1;
            self.reduce(gid);
            spent += 1;
        }
    }

    fn wake(&mut self, id: u64) -> Vec<u64> {
        let mut woken = Vec::new();
        let waiting: Vec<u64> = self.suspended.iter().filter(|(_, w)| w.contains(&id)).map(|(g, _)| *g).collect();
        for g in waiting {
            self.suspended.remove(&g);
            self.queue.push_back(g);
            woken.push(g);
        }
        woken
    }

    fn vanish(&mut self, vs: &[Var]) -> Vec<u64> {
        let mut woken = Vec::new();
        for v in vs {
            self.abandoned.insert(v.paired());
            if v.is_writer() {
                woken.extend(self.wake(v.id));
            }
        }
        woken
    }

    fn fail(&mut self, gid: u64, goal: &Term, reason: &str) {
        let vanished = distinct_vars(goal);
        let wake = self.vanish(&vanished);
        self.goals.remove(&gid);
        let mut r = Record::new(self.step, "main", "fail")
            .with("gid", gid.to_string())
            .with("goal", goal.to_string())
            .with("reason", reason);
        r.push("abandoned", var_list(&vanished));
        r.push("wake", id_list(&wake));
        self.trace.push(r);
    }

    fn suspend(&mut self, gid: u64, goal: &Term, blockers: BTreeSet<u64>) {
        let on: Vec<Term> = blockers.iter().map(|id| Term::reader(*id)).collect();
        self.trace.push(
            Record::new(self.step, "main", "suspend")
                .with("gid", gid.to_string())
                .with("goal", goal.to_string())
                .with("on", term_list(&on)),
        );
        self.suspended.insert(gid, blockers);
    }

    fn reduce(&mut self, gid: u64) {
        let goal = self.goals[&gid].clone();
        let Some((name, arity)) = goal.functor() else {
            self.fail(gid, &goal, "not_callable");
            return;
        };
        let name = name.to_string();
        let empty: HashMap<u64, Term> = HashMap::new();
        let base = self.ids.peek();
        if let Some(p) = self.program.lookup(&name, arity).cloned() {
            let ctx = Context { program: &self.program, step: self.step, module_hash: &self.program.hash, provenance: &[] };
            let mut rounds = Vec::new();
            let mut blockers = BTreeSet::new();
            let mut abandoned_only = false;
            let mut last_fail = FailReason::Clash;
            for (i, c) in p.clauses.iter().enumerate() {
                match try_clause(&ctx, &empty, &goal, c, base, &rounds) {
                    Attempt::Commit { bindings, body, units, used } => {
                        self.ids.take(used);
                        let proc = format!("{}/{}", atom_text(&p.name), p.arity);
                        self.commit(gid, &goal, &proc, &(i + 1).to_string(), base, units, bindings, body);
                        return;
                    }
                    Attempt::Suspend(w) => {
                        let live: BTreeSet<u64> =
                            w.iter().copied().filter(|id| *id < base && !self.abandoned.contains(&Var::reader(*id))).collect();
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
                self.fail(gid, &goal, reason);
            } else {
                self.suspend(gid, &goal, blockers);
            }
            return;
        }
        if !is_goal_builtin(&name, arity) {
            self.fail(gid, &goal, "unknown_procedure");
            return;
        }
        let args = goal.args().to_vec();
        let outcome = match name.as_str() {
            "true" => UnifyOutcome::Success(vec![]),
            "=" => writer_unify(&args[0], &args[1], &empty),
            "evaluate" => match eval_arith(&empty, &args[0]) {
                Ok(n) => writer_unify(&args[1], &Term::Num(n), &empty),
                Err(Arith::Blocked(w)) if !w.is_empty() => UnifyOutcome::Suspend(w),
                Err(Arith::Blocked(_)) => UnifyOutcome::Fail(FailReason::ReaderNeedsValue),
                Err(Arith::Error) => {
                    self.fail(gid, &goal, "arithmetic");
                    return;
                }
            },
            "current_time" => writer_unify(&args[0], &Term::int(self.step as i64), &empty),
            "variable_name" => match &args[0] {
                Term::Var(v) => writer_unify(&args[1], &Term::atom(&format!("_W{}", v.id)), &empty),
                _ => UnifyOutcome::Fail(FailReason::Clash),
            },
            _ => UnifyOutcome::Fail(FailReason::Clash),
        };
        let proc = format!("{}/{}", atom_text(&name), arity);
        match outcome {
            UnifyOutcome::Success(b) => self.commit(gid, &goal, &proc, "builtin", base, vec![], b, vec![]),
            UnifyOutcome::Suspend(w) => {
                let live: BTreeSet<u64> = w.into_iter().filter(|id| !self.abandoned.contains(&Var::reader(*id))).collect();
                if live.is_empty() {
                    self.fail(gid, &goal, "abandoned");
                } else {
                    self.suspend(gid, &goal, live);
                }
            }
            UnifyOutcome::Fail(r) => self.fail(gid, &goal, r.as_str()),
        }
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
    ) {
        self.goals.remove(&gid);
        let sigma: HashMap<u64, Term> = bindings.iter().cloned().collect();
        // the whole resolvent is rewritten at once
        for g in self.goals.values_mut() {
            *g = substitute(g, &sigma);
        }
        let body: Vec<Term> = body.iter().map(|b| substitute(b, &sigma)).collect();
        let mut wake = Vec::new();
        for (id, _) in &bindings {
            if *id < base {
                wake.extend(self.wake(*id));
            }
        }
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
        let vanished: Vec<Var> =
            distinct_vars(goal).into_iter().filter(|v| !sigma.contains_key(&v.id) && !kept.contains(v)).collect();
        wake.extend(self.vanish(&vanished));
        let mut gids = Vec::new();
        for b in &body {
            if !b.is_atom("true") {
                gids.push(self.add_goal(b.clone()));
            }
        }
        for g in &wake {
            if let Some(pos) = self.queue.iter().position(|x| x == g) {
                self.queue.remove(pos);
                self.queue.push_back(*g);
            }
        }
        let sigma_t: Vec<Term> = bindings.iter().map(|(id, t)| Term::cmp("bind", vec![Term::writer(*id), t.clone()])).collect();
        let unit_terms: Vec<Term> =
            units.iter().map(|(i, b)| Term::cmp("unit", vec![Term::int(*i as i64 + 1), Term::int(*b as i64)])).collect();
        let mut r = Record::new(self.step, "main", "reduce")
            .with("gid", gid.to_string())
            .with("goal", goal.to_string())
            .with("proc", proc)
            .with("clause", clause)
            .with("rename", base.to_string());
        r.push("units", term_list(&unit_terms));
        r.push("sigma", term_list(&sigma_t));
        r.push("body", term_list(&body.iter().filter(|b| !b.is_atom("true")).cloned().collect::<Vec<_>>()));
        r.push("gids", id_list(&gids));
        r.push("wake", id_list(&wake));
        r.push("abandoned", var_list(&vanished));
        self.trace.push(r);
    }
}

/// Rename variable ids in a trace by order of first appearance so two
/// traces that differ only in id choice compare equal.
pub fn canonical_records(records: &[Record]) -> Vec<String> {
    let mut map: HashMap<u64, u64> = HashMap::new();
    let mut out = Vec::new();
    for r in records {
        let mut line = format!("{} {}", r.kind, r.step);
        for (k, v) in &r.fields {
            if k == "rename" || k == "units" {
                // fresh-id bases differ by construction
                continue;
            }
            let text = match crate::parser::parse_canonical(v) {
                Ok(t) if v.contains("_W") => {
                    let t = t.map_vars(&mut |x| {
                        let n = map.len() as u64;
                        Term::Var(Var { id: *map.entry(x.id).or_insert(n), pol: x.pol })
                    });
                    t.to_string()
                }
                _ => v.clone(),
            };
            line.push_str(&format!(" {k}={text}"));
        }
        out.push(line);
    }
    out
}
