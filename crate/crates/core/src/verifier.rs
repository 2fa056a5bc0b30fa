//! Post-hoc checks over serialized traces.
//!
//! Every check replays the trace from its header (programs and initial
//! goals) and the records, keeping per agent a map of pair bindings and
//! the live goals. Clause selection is re-derived here from the pure
//! logic-program reading of a clause (see `lp_oracle`), not taken from the
//! engine.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::lp_oracle::{self, apply, check_step, mgu, pure_variant, Subst};
use crate::parser::{parse_canonical, parse_clauses, Clause, Module};
use crate::program::{is_guard_builtin, Program};
use crate::term::{Number, Term, Var};
use crate::trace::{Record, Trace};

pub const DEFAULT_SAMPLES: usize = 16;
pub const CHECKS: &[&str] = &["srsw", "acyclic", "deduction", "monotonicity", "streams"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub name: String,
    pub ok: bool,
    pub step: Option<u64>,
    pub detail: String,
}

impl Verdict {
    fn pass(name: &str, detail: impl Into<String>) -> Verdict {
        Verdict { name: name.into(), ok: true, step: None, detail: detail.into() }
    }

    fn fail(name: &str, step: Option<u64>, detail: impl Into<String>) -> Verdict {
        Verdict { name: name.into(), ok: false, step, detail: detail.into() }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            write!(f, "{} PASS", self.name)?;
        } else {
            match self.step {
                Some(s) => write!(f, "{} FAIL step={s}", self.name)?,
                None => write!(f, "{} FAIL step=-", self.name)?,
            }
        }
        if !self.detail.is_empty() {
            write!(f, " {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct AgentState {
    pub store: HashMap<u64, Term>,
    pub goals: BTreeMap<u64, Term>,
}

/// Trace state after some prefix of the records.
#[derive(Debug, Clone)]
pub struct Replay {
    pub agents: BTreeMap<String, AgentState>,
    pub programs: BTreeMap<String, Program>,
    pub world: bool,
}

fn field_term(r: &Record, key: &str) -> Result<Term, String> {
    let text = r.get(key).ok_or_else(|| format!("{} record without {key}", r.kind))?;
    parse_canonical(text).map_err(|e| format!("bad {key}: {e}"))
}

fn opt_list(r: &Record, key: &str) -> Result<Vec<Term>, String> {
    match r.get(key) {
        None => Ok(vec![]),
        Some(_) => list(&field_term(r, key)?),
    }
}

fn list(t: &Term) -> Result<Vec<Term>, String> {
    crate::corpus::list_items(t).ok_or_else(|| format!("expected a list, got {t}"))
}

fn field_u64(r: &Record, key: &str) -> Result<u64, String> {
    r.get(key).and_then(|v| v.parse().ok()).ok_or_else(|| format!("{} record without numeric {key}", r.kind))
}

fn as_u64(t: &Term) -> Result<u64, String> {
    match t {
        Term::Num(n) => n.to_i64().filter(|v| *v >= 0).map(|v| v as u64).ok_or_else(|| format!("bad id {t}")),
        _ => Err(format!("bad id {t}")),
    }
}

/// A `bind(_Wn, T)` entry.
fn binding(t: &Term) -> Result<(u64, Term), String> {
    match (t.functor(), t.args()) {
        (Some(("bind", 2)), [Term::Var(v), val]) if v.is_writer() => Ok((v.id, val.clone())),
        _ => Err(format!("malformed binding {t}")),
    }
}

/// Resolve `t` under `store`; Err on a circular chain.
pub fn resolve(store: &HashMap<u64, Term>, t: &Term) -> Result<Term, String> {
    fn go(store: &HashMap<u64, Term>, t: &Term, path: &mut Vec<u64>) -> Result<Term, String> {
        match t {
            Term::Var(v) => match store.get(&v.id) {
                None => Ok(t.clone()),
                Some(val) => {
                    if path.contains(&v.id) {
                        return Err(format!("circular term through _W{}", v.id));
                    }
                    path.push(v.id);
                    let val = if v.is_reader() { val.question() } else { val.clone() };
                    let out = go(store, &val, path);
                    path.pop();
                    out
                }
            },
            Term::Cmp(c) => {
                let args = c.args.iter().map(|a| go(store, a, path)).collect::<Result<Vec<_>, _>>()?;
                Ok(Term::cmp_arc(c.functor.clone(), args))
            }
            _ => Ok(t.clone()),
        }
    }
    go(store, t, &mut Vec::new())
}

impl Replay {
    pub fn new(trace: &Trace) -> Result<Replay, String> {
        let mut agents: BTreeMap<String, AgentState> = BTreeMap::new();
        let mut modules: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        let mut world = false;
        for h in &trace.header {
            if h.starts_with("glp-trace") {
                world = h.ends_with("world");
            }
        }
        for rest in trace.header_lines("agent") {
            let name = rest.split_whitespace().next().ok_or("empty agent line")?;
            agents.entry(name.to_string()).or_default();
            modules.entry(name.to_string()).or_default();
        }
        for rest in trace.header_lines("module") {
            let mut it = rest.split_whitespace();
            let (Some(agent), Some(m)) = (it.next(), it.next()) else { return Err(format!("bad module line {rest}")) };
            modules.entry(agent.to_string()).or_default().push((m.to_string(), String::new()));
        }
        for rest in trace.header_lines("clause") {
            let mut it = rest.splitn(3, ' ');
            let (Some(agent), Some(m), Some(text)) = (it.next(), it.next(), it.next()) else {
                return Err(format!("bad clause line {rest}"));
            };
            let mods = modules.get_mut(agent).ok_or_else(|| format!("clause for unknown agent {agent}"))?;
            let slot = mods.iter_mut().find(|(n, _)| n == m).ok_or_else(|| format!("clause for unknown module {m}"))?;
            slot.1.push_str(text);
            slot.1.push('\n');
        }
        for rest in trace.header_lines("init") {
            let mut it = rest.splitn(3, ' ');
            let (Some(agent), Some(gid), Some(goal)) = (it.next(), it.next(), it.next()) else {
                return Err(format!("bad init line {rest}"));
            };
            let gid: u64 = gid.strip_prefix("gid=").and_then(|g| g.parse().ok()).ok_or("bad init gid")?;
            let goal = parse_canonical(goal.strip_prefix("goal=").ok_or("bad init goal")?).map_err(|e| e.to_string())?;
            agents.entry(agent.to_string()).or_default().goals.insert(gid, goal);
        }
        let mut programs = BTreeMap::new();
        for (agent, mods) in modules {
            let ms = mods
                .into_iter()
                .map(|(n, text)| parse_clauses(&n, &text).map(|cs| Module::from_clauses(&n, cs)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            programs.insert(agent, Program::new(ms).map_err(|e| e.to_string())?);
        }
        Ok(Replay { agents, programs, world })
    }

    fn agent(&mut self, name: &str) -> &mut AgentState {
        self.agents.entry(name.to_string()).or_default()
    }

    /// Apply one record; returns the bindings it made.
    pub fn apply(&mut self, r: &Record) -> Result<Vec<(u64, Term)>, String> {
        let mut made = Vec::new();
        let mut bind = |a: &mut AgentState, list: Vec<Term>| -> Result<(), String> {
            for b in list {
                let (id, val) = binding(&b)?;
                if a.store.contains_key(&id) {
                    return Err(format!("pair _W{id} assigned twice"));
                }
                a.store.insert(id, val.clone());
                made.push((id, val));
            }
            Ok(())
        };
        match r.kind.as_str() {
            "reduce" => {
                let gid = field_u64(r, "gid")?;
                let sigma = opt_list(r, "sigma")?;
                let body = opt_list(r, "body")?;
                let gids = opt_list(r, "gids")?;
                let spawn = opt_list(r, "spawn")?;
                let a = self.agent(&r.agent);
                if a.goals.remove(&gid).is_none() {
                    return Err(format!("goal {gid} is not in the resolvent"));
                }
                bind(a, sigma)?;
                if body.len() != gids.len() {
                    return Err("body and gids differ in length".into());
                }
                for (g, t) in gids.iter().zip(body) {
                    a.goals.insert(as_u64(g)?, t);
                }
                for s in spawn {
                    match (s.functor(), s.args()) {
                        (Some(("goal", 2)), [g, t]) => {
                            a.goals.insert(as_u64(g)?, t.clone());
                        }
                        _ => return Err(format!("malformed spawn {s}")),
                    }
                }
            }
            "suspend" => {
                let gid = field_u64(r, "gid")?;
                if !self.agent(&r.agent).goals.contains_key(&gid) {
                    return Err(format!("goal {gid} is not in the resolvent"));
                }
            }
            "fail" => {
                let gid = field_u64(r, "gid")?;
                if self.agent(&r.agent).goals.remove(&gid).is_none() {
                    return Err(format!("goal {gid} is not in the resolvent"));
                }
            }
            "inject" | "communicate" => {
                let list = opt_list(r, "bind")?;
                let a = self.agent(&r.agent);
                bind(a, list)?;
            }
            "network" | "reject" => {}
            other => return Err(format!("unknown record kind {other}")),
        }
        Ok(made)
    }

    /// Occurrences of each unbound variable half across an agent's goals.
    pub fn occurrences(&self, agent: &str) -> Result<HashMap<Var, usize>, String> {
        let mut counts = HashMap::new();
        if let Some(a) = self.agents.get(agent) {
            for g in a.goals.values() {
                resolve(&a.store, g)?.for_each_var(&mut |v| *counts.entry(v).or_insert(0) += 1);
            }
        }
        Ok(counts)
    }
}

/// Replay `trace`, calling `f` after each record; the first error wins.
fn replay_with(
    trace: &Trace,
    mut f: impl FnMut(&Replay, &Record, &[(u64, Term)]) -> Result<(), String>,
) -> Result<(), (Option<u64>, String)> {
    let mut rp = Replay::new(trace).map_err(|e| (None, e))?;
    for r in &trace.records {
        let made = rp.apply(r).map_err(|e| (Some(r.step), e))?;
        f(&rp, r, &made).map_err(|e| (Some(r.step), e))?;
    }
    Ok(())
}

fn verdict(name: &str, res: Result<(), (Option<u64>, String)>, ok_detail: String) -> Verdict {
    match res {
        Ok(()) => Verdict::pass(name, ok_detail),
        Err((step, e)) => Verdict::fail(name, step, e),
    }
}

fn check_srsw_state(rp: &Replay, agent: &str) -> Result<(), String> {
    for (v, n) in rp.occurrences(agent)? {
        if n > 1 {
            let half = if v.is_reader() { format!("_W{}?", v.id) } else { format!("_W{}", v.id) };
            return Err(format!("{half} occurs {n} times in the resolvent of {agent}"));
        }
    }
    Ok(())
}

/// At most one occurrence of each variable half across every resolvent.
pub fn verify_srsw(trace: &Trace) -> Verdict {
    let init = Replay::new(trace).and_then(|rp| rp.agents.keys().try_for_each(|a| check_srsw_state(&rp, a)));
    if let Err(e) = init {
        return Verdict::fail("srsw", Some(0), e);
    }
    let res = replay_with(trace, |rp, r, _| check_srsw_state(rp, &r.agent));
    verdict("srsw", res, format!("{} records", trace.records.len()))
}

/// Every binding and every goal dereferences in finitely many steps.
pub fn verify_acyclic(trace: &Trace) -> Verdict {
    let res = replay_with(trace, |rp, r, made| {
        let a = &rp.agents[&r.agent];
        for (id, _) in made {
            resolve(&a.store, &Term::writer(*id))?;
        }
        for g in a.goals.values() {
            resolve(&a.store, g)?;
        }
        Ok(())
    });
    verdict("acyclic", res, format!("{} records", trace.records.len()))
}

fn proc_key(r: &Record) -> Result<(String, usize), String> {
    let t = field_term(r, "proc")?;
    match (t.functor(), t.args()) {
        (Some(("/", 2)), [Term::Atom(n), Term::Num(a)]) => Ok((n.to_string(), a.to_i64().unwrap_or(-1) as usize)),
        _ => Err(format!("bad proc {t}")),
    }
}

fn eval(t: &Term) -> Option<Number> {
    match t {
        Term::Num(n) => Some(n.clone()),
        Term::Cmp(_) => {
            let (name, arity) = t.functor()?;
            let a = t.args();
            match (name, arity) {
                ("-", 1) => Some(eval(&a[0])?.neg()),
                ("+", 2) => Some(eval(&a[0])?.add(&eval(&a[1])?)),
                ("-", 2) => Some(eval(&a[0])?.sub(&eval(&a[1])?)),
                ("*", 2) => Some(eval(&a[0])?.mul(&eval(&a[1])?)),
                ("/", 2) => eval(&a[0])?.div(&eval(&a[1])?).ok(),
                ("mod", 2) => eval(&a[0])?.rem(&eval(&a[1])?).ok(),
                _ => None,
            }
        }
        _ => None,
    }
}

/// Truth of a read-only guard test on already-substituted arguments;
/// None for tests that depend on more than the arguments.
fn guard_holds(g: &Term) -> Option<bool> {
    let (name, arity) = g.functor()?;
    let a = g.args();
    let cmp = |f: fn(&Number, &Number) -> bool| match (eval(&a[0]), eval(&a[1])) {
        (Some(x), Some(y)) => Some(f(&x, &y)),
        _ => Some(false),
    };
    match (name, arity) {
        ("true", 0) => Some(true),
        ("ground", 1) => Some(a[0].is_ground()),
        ("known", 1) => Some(!a[0].is_var()),
        ("=\\=", 2) => Some(mgu(&[(a[0].clone(), a[1].clone())]).is_none()),
        ("<", 2) => cmp(|x, y| x < y),
        (">", 2) => cmp(|x, y| x > y),
        ("=<", 2) => cmp(|x, y| x <= y),
        (">=", 2) => cmp(|x, y| x >= y),
        ("=:=", 2) => cmp(|x, y| x == y),
        _ => None,
    }
}

fn writer_condition(goal: &Term, claimed: &Subst, base: u64) -> Result<(), String> {
    let writers: BTreeSet<u64> = goal.vars().into_iter().filter(|v| v.is_writer()).map(|v| v.id).collect();
    for id in claimed.keys() {
        if *id < base && !writers.contains(id) {
            return Err(format!("binds _W{id}, which is not a writer of the goal"));
        }
    }
    Ok(())
}

/// Check one reduce record as a logic-program resolution step.
fn check_reduce(rp: &Replay, r: &Record, max_seen: u64) -> Result<(), String> {
    let goal = field_term(r, "goal")?;
    let gid = field_u64(r, "gid")?;
    let a = rp.agents.get(&r.agent).ok_or("unknown agent")?;
    let live = a.goals.get(&gid).ok_or_else(|| format!("goal {gid} is not in the resolvent"))?;
    if resolve(&a.store, live)? != goal {
        return Err(format!("recorded goal {goal} differs from the resolvent"));
    }
    let mut claimed = Subst::new();
    for b in opt_list(r, "sigma")? {
        let (id, val) = binding(&b)?;
        claimed.insert(id, pure_variant(&val));
    }
    let successor = opt_list(r, "body")?;
    let base = field_u64(r, "rename")?;
    let (name, arity) = proc_key(r)?;
    let clause_field = r.get("clause").ok_or("reduce without clause")?;
    writer_condition(&goal, &claimed, base)?;
    if clause_field == "builtin" {
        let args = goal.args().to_vec();
        let extra: Vec<(Term, Term)> = match (name.as_str(), arity) {
            ("=", 2) => vec![(args[0].clone(), args[1].clone())],
            ("true", 0) => vec![],
            ("evaluate", 2) => {
                let n = eval(&args[0]).ok_or_else(|| format!("cannot evaluate {}", args[0]))?;
                vec![(args[1].clone(), Term::Num(n))]
            }
            ("current_time", 1) => {
                let v = apply(&pure_variant(&args[0]), &claimed);
                if !matches!(v, Term::Num(_)) {
                    return Err(format!("current_time gave {v}"));
                }
                vec![(args[0].clone(), v)]
            }
            ("variable_name", 2) => match &args[0] {
                Term::Var(v) => vec![(args[1].clone(), Term::atom(&format!("_W{}", v.id)))],
                _ => return Err("variable_name of a non-variable".into()),
            },
            _ => return Err(format!("unknown builtin {name}/{arity}")),
        };
        return check_step(&goal, &goal, &extra, &claimed, &[], &successor);
    }
    if base <= max_seen {
        return Err(format!("renaming base {base} reuses an earlier variable"));
    }
    let program = rp.programs.get(&r.agent).ok_or("no program for agent")?;
    let proc = program.lookup(&name, arity).ok_or_else(|| format!("no procedure {name}/{arity}"))?;
    let idx: usize = clause_field.parse().map_err(|_| format!("bad clause {clause_field}"))?;
    let clause = proc.clauses.get(idx.wrapping_sub(1)).ok_or_else(|| format!("no clause {idx}"))?;
    let renamed = clause.rename(base);
    let mut units = opt_list(r, "units")?.into_iter();
    let mut extra = Vec::new();
    let mut tests = Vec::new();
    for g in &renamed.guard {
        let (gn, ga) = g.functor().ok_or("bad guard")?;
        if !is_guard_builtin(gn, ga) {
            let u = units.next().ok_or_else(|| format!("no unit recorded for guard {g}"))?;
            let (i, ub) = match u.args() {
                [i, b] => (as_u64(i)? as usize, as_u64(b)?),
                _ => return Err(format!("malformed unit {u}")),
            };
            let up = program.lookup(gn, ga).ok_or_else(|| format!("no guard procedure {gn}/{ga}"))?;
            let uc = up.clauses.get(i.wrapping_sub(1)).ok_or_else(|| format!("no unit clause {i}"))?;
            extra.push((g.clone(), uc.rename(ub).head));
            continue;
        }
        match (gn, ga) {
            ("=", 2) => extra.push((g.args()[0].clone(), g.args()[1].clone())),
            ("attestation", 2) => {
                let arg = &g.args()[1];
                extra.push((arg.clone(), apply(&pure_variant(arg), &claimed)));
            }
            ("module", 1) => {
                let arg = &g.args()[0];
                extra.push((arg.clone(), apply(&pure_variant(arg), &claimed)));
            }
            _ => tests.push(g.clone()),
        }
    }
    let body: Vec<Term> = renamed.body.iter().filter(|b| !b.is_atom("true")).cloned().collect();
    check_step(&goal, &renamed.head, &extra, &claimed, &body, &successor)?;
    for t in tests {
        if guard_holds(&apply(&pure_variant(&t), &claimed)) == Some(false) {
            return Err(format!("guard {t} does not hold under the recorded substitution"));
        }
    }
    Ok(())
}

fn max_id(t: &Term, m: &mut u64) {
    t.for_each_var(&mut |v| *m = (*m).max(v.id));
}

fn record_max_id(r: &Record, m: &mut u64) {
    for (_, v) in &r.fields {
        if v.contains("_W") {
            if let Ok(t) = parse_canonical(v) {
                max_id(&t, m);
            }
        }
    }
}

/// A network record routes the next message on the sender's output
/// stream (up to renaming of its variables) to the agent it addresses.
fn check_network(rp: &Replay, r: &Record, ids: &HashMap<String, String>) -> Result<(), String> {
    let (Some(from), Some(to)) = (r.get("from"), r.get("to")) else { return Ok(()) };
    let term = field_term(r, "term")?;
    let cursor = field_term(r, "cursor")?;
    let a = rp.agents.get(from).ok_or("unknown sender")?;
    let head = match resolve(&a.store, &cursor)?.as_cons() {
        Some((h, _)) => h.clone(),
        None => return Err(format!("nothing to route on {from}'s stream")),
    };
    let (dest, content) = match (head.functor(), head.args()) {
        (Some(("msg", 3)), [_, d, _]) => (d.clone(), head.clone()),
        (Some(("msg", 2)), [d, c]) => (d.clone(), c.clone()),
        _ => return Err(format!("unroutable {head}")),
    };
    let addressed = dest.is_atom(to) || ids.get(to).map(|id| dest.is_atom(id)).unwrap_or(false);
    if !addressed {
        return Err(format!("{head} is not addressed to {to}"));
    }
    if !lp_oracle::is_variant(&[pure_variant(&content)], &[pure_variant(&term)]) {
        return Err(format!("{term} is not the next message on {from}'s stream"));
    }
    Ok(())
}

/// Every reduce record is a resolution step of the pure reading of the
/// recorded clause; network steps route what the sender emitted.
pub fn verify_deduction(trace: &Trace) -> Verdict {
    let mut rp = match Replay::new(trace) {
        Ok(rp) => rp,
        Err(e) => return Verdict::fail("deduction", None, e),
    };
    let mut max_seen = 0u64;
    for g in rp.agents.values().flat_map(|a| a.goals.values()) {
        max_id(g, &mut max_seen);
    }
    let ids: HashMap<String, String> = trace
        .header_lines("agent")
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            let name = it.next()?;
            let id = it.find_map(|f| f.strip_prefix("id="))?;
            Some((name.to_string(), id.to_string()))
        })
        .collect();
    let mut reductions = 0;
    for r in &trace.records {
        let res = match r.kind.as_str() {
            "reduce" => {
                reductions += 1;
                check_reduce(&rp, r, max_seen)
            }
            "network" => check_network(&rp, r, &ids),
            _ => Ok(()),
        };
        if let Err(e) = res.and_then(|_| rp.apply(r).map(|_| ())) {
            return Verdict::fail("deduction", Some(r.step), e);
        }
        record_max_id(r, &mut max_seen);
    }
    Verdict::pass("deduction", format!("{reductions} reductions"))
}

/// Guards whose truth can only grow as readers get values.
fn monotone_clause(c: &Clause, program: &Program) -> bool {
    c.guard.iter().all(|g| {
        let (n, a) = g.functor().unwrap_or(("", 0));
        matches!(
            (n, a),
            ("true", 0) | ("ground", 1) | ("known", 1) | ("=", 2) | ("=\\=", 2) | ("<", 2) | (">", 2) | ("=<", 2) | (">=", 2) | ("=:=", 2)
        ) || (!is_guard_builtin(n, a) && program.lookup(n, a).is_some())
    })
}

/// Clauses (by index) that commit on `goal`, decided from the pure
/// reading: one mgu for head and guard equations that instantiates no
/// reader of the goal and identifies no two goal variables, with the
/// remaining guard tests true under it. Clauses with guards that can turn
/// false later are left out.
pub fn committing_clauses(program: &Program, goal: &Term, base: u64) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let Some((name, arity)) = goal.functor() else { return out };
    let Some(proc) = program.lookup(name, arity) else { return out };
    let goal_vars: Vec<Var> = goal.vars();
    'clauses: for (i, c) in proc.clauses.iter().enumerate() {
        if !monotone_clause(c, program) {
            continue;
        }
        let renamed = c.rename(base);
        let mut next = base + c.nvars;
        let mut eqs = vec![(goal.clone(), renamed.head.clone())];
        let mut tests = Vec::new();
        for g in &renamed.guard {
            let (gn, ga) = g.functor().unwrap_or(("", 0));
            if gn == "=" && ga == 2 {
                eqs.push((g.args()[0].clone(), g.args()[1].clone()));
            } else if !is_guard_builtin(gn, ga) {
                let units = &program.lookup(gn, ga).expect("checked above").clauses;
                let mut found = false;
                for u in units {
                    let mut trial = eqs.clone();
                    trial.push((g.clone(), u.rename(next).head));
                    if mgu(&trial).is_some() {
                        eqs = trial;
                        next += u.nvars;
                        found = true;
                        break;
                    }
                }
                if !found {
                    continue 'clauses;
                }
            } else {
                tests.push(g.clone());
            }
        }
        let Some(theta) = mgu(&eqs) else { continue };
        let mut images: HashMap<u64, u64> = HashMap::new();
        for v in &goal_vars {
            match apply(&Term::writer(v.id), &theta) {
                Term::Var(u) => {
                    if let Some(prev) = images.insert(u.id, v.id) {
                        if prev != v.id {
                            continue 'clauses;
                        }
                    }
                    if u.id < base && u.id != v.id {
                        continue 'clauses;
                    }
                }
                _ if v.is_reader() => continue 'clauses,
                _ => {}
            }
        }
        for t in &tests {
            if guard_holds(&apply(&pure_variant(t), &theta)) != Some(true) {
                continue 'clauses;
            }
        }
        out.insert(i + 1);
    }
    out
}

/// At sampled points, the set of clauses a live goal can commit with never
/// loses members while the goal stays unreduced.
pub fn verify_monotonicity(trace: &Trace, seed: u64, samples: usize) -> Verdict {
    let mut rp = match Replay::new(trace) {
        Ok(rp) => rp,
        Err(e) => return Verdict::fail("monotonicity", None, e),
    };
    let n = trace.records.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<usize> = if n < samples {
        (0..=n).collect()
    } else {
        rand::seq::index::sample(&mut rng, n + 1, samples).into_vec()
    };
    points.sort_unstable();
    let mut top = 0u64;
    for g in rp.agents.values().flat_map(|a| a.goals.values()) {
        max_id(g, &mut top);
    }
    for r in &trace.records {
        record_max_id(r, &mut top);
    }
    let base = top + 1;
    let mut seen: HashMap<(String, u64), BTreeSet<usize>> = HashMap::new();
    let mut compared = 0usize;
    let mut at = 0usize;
    for p in points {
        while at < p {
            let r = &trace.records[at];
            if let Err(e) = rp.apply(r) {
                return Verdict::fail("monotonicity", Some(r.step), e);
            }
            at += 1;
        }
        let step = if p == 0 { 0 } else { trace.records[p - 1].step };
        let mut now = HashMap::new();
        for (name, a) in &rp.agents {
            let Some(program) = rp.programs.get(name) else { continue };
            for (gid, g) in &a.goals {
                let goal = match resolve(&a.store, g) {
                    Ok(t) => t,
                    Err(e) => return Verdict::fail("monotonicity", Some(step), e),
                };
                let set = committing_clauses(program, &goal, base);
                if let Some(prev) = seen.get(&(name.clone(), *gid)) {
                    compared += 1;
                    if !prev.is_subset(&set) {
                        return Verdict::fail(
                            "monotonicity",
                            Some(step),
                            format!("goal {gid} of {name} ({goal}) could commit with clauses {prev:?}, now only {set:?}"),
                        );
                    }
                }
                now.insert((name.clone(), *gid), set);
            }
        }
        seen = now;
    }
    Verdict::pass("monotonicity", format!("{compared} comparisons"))
}

fn cons_cells(t: &Term, out: &mut Vec<(Term, Term)>) {
    if let Some((h, tl)) = t.as_cons() {
        out.push((h.clone(), tl.clone()));
    }
    if let Term::Cmp(c) = t {
        for a in c.args.iter() {
            cons_cells(a, out);
        }
    }
}

/// Immutability, unforkable stream tails, signed cross-agent assignments,
/// and an acyclic block graph whose references point at earlier blocks.
pub fn verify_streams(trace: &Trace) -> Verdict {
    let mut tails: BTreeSet<u64> = BTreeSet::new();
    // block payload -> (first step, tips)
    let mut blocks: BTreeMap<String, (u64, Vec<String>)> = BTreeMap::new();
    let res = replay_with(trace, |rp, r, made| {
        if r.kind == "communicate" {
            let signers = opt_list(r, "signers")?;
            let from = r.get("from").unwrap_or("");
            if signers.len() != 1 || !signers[0].is_atom(from) {
                return Err(format!("message from {from} carries signers {signers:?}"));
            }
        }
        let a = &rp.agents[&r.agent];
        for (_, val) in made {
            let mut cells = Vec::new();
            cons_cells(&resolve(&a.store, val)?, &mut cells);
            for (h, tl) in cells {
                if let Term::Var(v) = tl {
                    tails.insert(v.id);
                }
                if let (Some(("block", 2)), [p, tips]) = (h.functor(), h.args()) {
                    let key = p.to_string();
                    if blocks.contains_key(&key) {
                        continue;
                    }
                    let tips: Vec<String> = list(tips)?.iter().map(|t| t.to_string()).collect();
                    for t in &tips {
                        match blocks.get(t) {
                            Some((s, _)) if *s < r.step => {}
                            _ => return Err(format!("block {key} references {t}, which was not delivered earlier")),
                        }
                    }
                    blocks.insert(key, (r.step, tips));
                }
            }
        }
        let counts = rp.occurrences(&r.agent)?;
        for id in &tails {
            if a.store.contains_key(id) {
                continue;
            }
            if counts.get(&Var::writer(*id)).copied().unwrap_or(0) > 1 {
                return Err(format!("stream tail _W{id} has two writers"));
            }
        }
        Ok(())
    });
    if let Err((step, e)) = res {
        let e = if e.contains("assigned twice") { format!("immutability: {e}") } else { e };
        return Verdict::fail("streams", step, e);
    }
    // topological order of the block graph
    let mut indeg: BTreeMap<&str, usize> = blocks.keys().map(|k| (k.as_str(), 0)).collect();
    for (_, tips) in blocks.values() {
        for t in tips {
            *indeg.get_mut(t.as_str()).expect("tips are known blocks") += 1;
        }
    }
    let mut ready: Vec<&str> = indeg.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
    let mut done = 0;
    while let Some(k) = ready.pop() {
        done += 1;
        for t in &blocks[k].1 {
            let d = indeg.get_mut(t.as_str()).expect("known");
            *d -= 1;
            if *d == 0 {
                ready.push(t.as_str());
            }
        }
    }
    if done != blocks.len() {
        return Verdict::fail("streams", None, "block references form a cycle");
    }
    Verdict::pass("streams", format!("{} tails, {} blocks", tails.len(), blocks.len()))
}

/// Some agent in `p` holds a variable created outside `p`, received after
/// a network delivery from outside.
pub fn verify_grassroots_interaction(trace: &Trace, p: &[&str]) -> Verdict {
    let name = "grassroots";
    let rp = match Replay::new(trace) {
        Ok(rp) => rp,
        Err(e) => return Verdict::fail(name, None, e),
    };
    if rp.agents.keys().all(|a| p.contains(&a.as_str())) {
        return Verdict::fail(name, None, "vacuous: no agent outside the group");
    }
    let mut delivered: BTreeSet<String> = BTreeSet::new();
    for r in &trace.records {
        if r.kind == "network" {
            let (Some(from), Some(to)) = (r.get("from"), r.get("to")) else { continue };
            if !p.contains(&from) && p.contains(&to) {
                delivered.insert(to.to_string());
            }
        }
        if r.kind == "communicate" && p.contains(&r.agent.as_str()) && delivered.contains(&r.agent) {
            for imp in opt_list(r, "import").unwrap_or_default() {
                if let [v, Term::Atom(creator)] = imp.args() {
                    if !p.contains(&&**creator) {
                        return Verdict::pass(name, format!("{} holds {v} created by {creator}", r.agent));
                    }
                }
            }
        }
    }
    Verdict::fail(name, None, "not interactive in this run")
}

/// Run the named checks; `seed` drives monotonicity sampling.
pub fn run_checks(trace: &Trace, names: &[&str], seed: u64) -> Vec<Verdict> {
    names
        .iter()
        .map(|n| match *n {
            "srsw" => verify_srsw(trace),
            "acyclic" => verify_acyclic(trace),
            "deduction" => verify_deduction(trace),
            "monotonicity" => verify_monotonicity(trace, seed, DEFAULT_SAMPLES),
            "streams" => verify_streams(trace),
            other => Verdict::fail(other, None, "unknown check"),
        })
        .collect()
}

/// Forged traces, each breaking one property of a valid trace.
pub mod planted {
    use super::*;

    fn first_reduce(trace: &Trace, pred: impl Fn(&Record) -> bool) -> Option<usize> {
        trace.records.iter().position(|r| r.kind == "reduce" && pred(r))
    }

    fn set(r: &mut Record, key: &str, value: String) {
        if let Some(f) = r.fields.iter_mut().find(|(k, _)| k == key) {
            f.1 = value;
        } else {
            r.push(key, value);
        }
    }

    /// Duplicate a body goal, so its variables occur twice.
    pub fn srsw(trace: &Trace) -> Option<Trace> {
        let mut t = trace.clone();
        let Some(i) = first_reduce(&t, |r| r.get("body").map(|b| b.contains("_W")).unwrap_or(false)) else {
            // no body holds a variable: start a second copy of an initial goal
            let init = t.header.iter().find(|h| h.starts_with("init ") && h.contains("_W"))?.clone();
            let (agent, rest) = init["init ".len()..].split_once(' ')?;
            let goal = rest.split_once(' ')?.1;
            t.header.push(format!("init {agent} gid=1000000 {goal}"));
            return Some(t);
        };
        let r = &mut t.records[i];
        let body = opt_list(r, "body").ok()?;
        let mut gids = opt_list(r, "gids").ok()?;
        let dup = body.iter().find(|b| !b.vars().is_empty())?.clone();
        let mut body2 = body.clone();
        body2.push(dup);
        gids.push(Term::int(1_000_000));
        set(r, "body", crate::engine::term_list(&body2));
        set(r, "gids", crate::engine::term_list(&gids));
        Some(t)
    }

    /// Bind an unbound writer of some reduced goal to a term holding its
    /// own reader.
    pub fn acyclic(trace: &Trace) -> Option<Trace> {
        let mut t = trace.clone();
        let Some(i) = first_reduce(&t, |r| {
            field_term(r, "body").map(|b| b.vars().iter().any(|v| v.is_writer())).unwrap_or(false)
        }) else {
            // otherwise make an existing binding refer to itself
            let i = first_reduce(&t, |r| r.get("sigma").map(|s| s != "[]").unwrap_or(false))?;
            let r = &mut t.records[i];
            let mut sigma = opt_list(r, "sigma").ok()?;
            let (id, _) = binding(&sigma[0]).ok()?;
            sigma[0] = Term::cmp("bind", vec![Term::writer(id), Term::cmp("f", vec![Term::reader(id)])]);
            set(r, "sigma", crate::engine::term_list(&sigma));
            return Some(t);
        };
        let r = &mut t.records[i];
        let body = field_term(r, "body").ok()?;
        let w = body.vars().into_iter().find(|v| v.is_writer())?;
        let mut sigma = opt_list(r, "sigma").ok()?;
        sigma.push(Term::cmp("bind", vec![Term::writer(w.id), Term::cmp("f", vec![Term::reader(w.id)])]));
        set(r, "sigma", crate::engine::term_list(&sigma));
        Some(t)
    }

    /// Replace the value of a recorded binding with an unrelated atom.
    pub fn deduction(trace: &Trace) -> Option<Trace> {
        let mut t = trace.clone();
        let i = first_reduce(&t, |r| r.get("clause") != Some("builtin") && r.get("sigma").map(|s| s != "[]").unwrap_or(false))?;
        let r = &mut t.records[i];
        let mut sigma = opt_list(r, "sigma").ok()?;
        let (id, _) = binding(&sigma[0]).ok()?;
        sigma[0] = Term::cmp("bind", vec![Term::writer(id), Term::atom("forged")]);
        set(r, "sigma", crate::engine::term_list(&sigma));
        Some(t)
    }

    /// Bind an already-bound pair a second time.
    pub fn double_assignment(trace: &Trace) -> Option<Trace> {
        let mut t = trace.clone();
        let i = first_reduce(&t, |r| r.get("sigma").map(|s| s != "[]").unwrap_or(false))?;
        let (id, _) = binding(&opt_list(&t.records[i], "sigma").ok()?[0]).ok()?;
        let j = (i + 1..t.records.len()).find(|&j| t.records[j].kind == "reduce" && t.records[j].agent == t.records[i].agent)?;
        let r = &mut t.records[j];
        let mut sigma = opt_list(r, "sigma").ok()?;
        sigma.push(Term::cmp("bind", vec![Term::writer(id), Term::atom("again")]));
        set(r, "sigma", crate::engine::term_list(&sigma));
        Some(t)
    }

    /// A goal p(X) that could commit with p(a), after another goal assigns
    /// its writer the value b: only possible if goals could instantiate
    /// each other's writers.
    pub fn monotonicity() -> Trace {
        let text = "# glp-trace v1 single\n\
                    # agent main module=forged\n\
                    # module main forged hash=forged\n\
                    # clause main forged p(a).\n\
                    # clause main forged q(b).\n\
                    # init main gid=1 goal=p(_W1)\n\
                    # init main gid=2 goal=q(_W1)\n\
                    step=1 agent=main kind=reduce gid=2 goal=q(_W1) proc=q/1 clause=1 rename=2 units=[] sigma=[bind(_W1,b)] body=[] gids=[] wake=[] abandoned=[]\n";
        Trace::parse(text).expect("forged trace parses")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::Program;
    use crate::session::Session;
    use std::sync::Arc;

    fn merge_trace() -> Trace {
        let src = "merge([X|Xs],Ys,[X?|Zs?]) :- merge(Ys?,Xs?,Zs).\nmerge(Xs,[Y|Ys],[Y?|Zs?]) :- merge(Xs?,Ys?,Zs).\nmerge([],[],[]).\n";
        let p = Arc::new(Program::from_source("merge", src).unwrap());
        let mut s = Session::start(p, "merge([1,2],[a,b],Zs)").unwrap();
        s.run(1000).unwrap();
        Trace::parse(&s.trace().render()).unwrap()
    }

    #[test]
    fn merge_run_passes_everything() {
        let t = merge_trace();
        for v in run_checks(&t, CHECKS, 0) {
            assert!(v.ok, "{v}");
        }
    }

    #[test]
    fn empty_trace_passes_vacuously() {
        let t = Trace::parse("# glp-trace v1 single\n").unwrap();
        assert!(verify_srsw(&t).ok);
        assert!(verify_acyclic(&t).ok);
    }

    #[test]
    fn planted_traces_fail() {
        let t = merge_trace();
        assert!(!verify_srsw(&planted::srsw(&t).unwrap()).ok);
        assert!(!verify_acyclic(&planted::acyclic(&t).unwrap()).ok);
        assert!(!verify_deduction(&planted::deduction(&t).unwrap()).ok);
        let v = verify_streams(&planted::double_assignment(&t).unwrap());
        assert!(!v.ok && v.detail.contains("immutability"), "{v}");
        assert!(!verify_monotonicity(&planted::monotonicity(), 0, 16).ok);
    }

    #[test]
    fn verdict_lines() {
        assert_eq!(Verdict::pass("srsw", "").to_string(), "srsw PASS");
        assert_eq!(Verdict::fail("acyclic", Some(4), "x").to_string(), "acyclic FAIL step=4 x");
    }
}
