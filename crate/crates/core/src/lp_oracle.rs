//! Plain logic-program resolution over pure terms: Robinson unification with
//! occurs check and a depth-bounded exhaustive search. Used as an
//! independent oracle; it shares nothing with the engine but the term type.

use std::collections::{BTreeMap, HashMap};

use crate::parser::Clause;
use crate::term::{Term, Var};

pub type Subst = HashMap<u64, Term>;

/// Replace every reader by its paired writer.
pub fn pure_variant(t: &Term) -> Term {
    t.map_vars(&mut |v| Term::writer(v.id))
}

fn walk(t: &Term, s: &Subst) -> Term {
    let mut cur = t.clone();
    while let Term::Var(v) = &cur {
        match s.get(&v.id) {
            Some(n) => cur = n.clone(),
            None => break,
        }
    }
    cur
}

/// Apply a (possibly triangular) substitution fully.
pub fn apply(t: &Term, s: &Subst) -> Term {
    match walk(t, s) {
        Term::Cmp(c) => Term::cmp_arc(c.functor.clone(), c.args.iter().map(|a| apply(a, s)).collect()),
        other => other,
    }
}

fn occurs(id: u64, t: &Term, s: &Subst) -> bool {
    match walk(t, s) {
        Term::Var(v) => v.id == id,
        Term::Cmp(c) => c.args.iter().any(|a| occurs(id, a, s)),
        _ => false,
    }
}

/// Extend `s` to unify `a` and `b`; variables are compared by id only.
pub fn unify(a: &Term, b: &Term, s: &mut Subst) -> bool {
    let x = walk(a, s);
    let y = walk(b, s);
    match (&x, &y) {
        (Term::Var(u), Term::Var(v)) if u.id == v.id => true,
        (Term::Var(u), _) => {
            if occurs(u.id, &y, s) {
                return false;
            }
            s.insert(u.id, y.clone());
            true
        }
        (_, Term::Var(v)) => {
            if occurs(v.id, &x, s) {
                return false;
            }
            s.insert(v.id, x.clone());
            true
        }
        (Term::Cmp(c), Term::Cmp(d)) => {
            c.functor == d.functor
                && c.args.len() == d.args.len()
                && c.args.iter().zip(d.args.iter()).all(|(p, q)| unify(p, q, s))
        }
        _ => x == y,
    }
}

/// Idempotent mgu of a set of equations, if any.
pub fn mgu(eqs: &[(Term, Term)]) -> Option<Subst> {
    let mut s = Subst::new();
    for (a, b) in eqs {
        if !unify(&pure_variant(a), &pure_variant(b), &mut s) {
            return None;
        }
    }
    let keys: Vec<u64> = s.keys().copied().collect();
    let solved: Subst = keys.into_iter().map(|k| (k, apply(&Term::writer(k), &s))).collect();
    Some(solved)
}

/// True when the two term lists are equal up to a consistent bijective
/// renaming of variable ids.
pub fn is_variant(a: &[Term], b: &[Term]) -> bool {
    fn go(x: &Term, y: &Term, fwd: &mut BTreeMap<u64, u64>, back: &mut BTreeMap<u64, u64>) -> bool {
        match (x, y) {
            (Term::Var(u), Term::Var(v)) => {
                if u.pol != v.pol {
                    return false;
                }
                let f = *fwd.entry(u.id).or_insert(v.id);
                let g = *back.entry(v.id).or_insert(u.id);
                f == v.id && g == u.id
            }
            (Term::Cmp(c), Term::Cmp(d)) => {
                c.functor == d.functor
                    && c.args.len() == d.args.len()
                    && c.args.iter().zip(d.args.iter()).all(|(p, q)| go(p, q, fwd, back))
            }
            _ => x == y,
        }
    }
    let mut fwd = BTreeMap::new();
    let mut back = BTreeMap::new();
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| go(x, y, &mut fwd, &mut back))
}

/// Verdict on one claimed resolution step: `claimed` must unify goal and
/// head and be a variant of their most general unifier on the variables
/// involved; `successor` must equal the body under `claimed`.
pub fn check_step(
    goal: &Term,
    head: &Term,
    extra: &[(Term, Term)],
    claimed: &Subst,
    body: &[Term],
    successor: &[Term],
) -> Result<(), String> {
    let mut eqs = vec![(goal.clone(), head.clone())];
    eqs.extend(extra.iter().cloned());
    let Some(theta) = mgu(&eqs) else {
        return Err("goal and head do not unify".into());
    };
    for (a, b) in &eqs {
        if apply(&pure_variant(a), claimed) != apply(&pure_variant(b), claimed) {
            return Err(format!("claimed substitution does not unify {a} and {b}"));
        }
    }
    let mut vars: Vec<u64> = Vec::new();
    for (a, b) in &eqs {
        for v in a.vars().into_iter().chain(b.vars()) {
            if !vars.contains(&v.id) {
                vars.push(v.id);
            }
        }
    }
    let by_claim: Vec<Term> = vars.iter().map(|id| apply(&Term::writer(*id), claimed)).collect();
    let by_mgu: Vec<Term> = vars.iter().map(|id| apply(&Term::writer(*id), &theta)).collect();
    if !is_variant(&by_claim, &by_mgu) {
        return Err("claimed substitution is not most general".into());
    }
    let expect: Vec<Term> = body.iter().map(|b| apply(&pure_variant(b), claimed)).collect();
    let got: Vec<Term> = successor.iter().map(pure_variant).collect();
    if expect != got {
        return Err("successor goals do not match the clause body".into());
    }
    Ok(())
}

/// A pure clause: guards are dropped, readers become writers.
#[derive(Debug, Clone)]
pub struct LpClause {
    pub head: Term,
    pub body: Vec<Term>,
    pub nvars: u64,
}

impl LpClause {
    pub fn from_clause(c: &Clause) -> LpClause {
        LpClause { head: pure_variant(&c.head), body: c.body.iter().map(pure_variant).collect(), nvars: c.nvars }
    }

    fn rename(&self, base: u64) -> (Term, Vec<Term>) {
        let mut f = |v: Var| Term::writer(base + v.id);
        (self.head.map_vars(&mut f), self.body.iter().map(|b| b.map_vars(&mut f)).collect())
    }
}

/// One resolution step on atom `at` of `resolvent` with `clause` renamed at `base`.
pub fn lp_reduce(resolvent: &[Term], at: usize, clause: &LpClause, base: u64) -> Option<(Vec<Term>, Subst)> {
    let (head, body) = clause.rename(base);
    let s = mgu(&[(resolvent[at].clone(), head)])?;
    let mut next: Vec<Term> = Vec::new();
    for (i, g) in resolvent.iter().enumerate() {
        if i == at {
            next.extend(body.iter().map(|b| apply(b, &s)));
        } else {
            next.push(apply(g, &s));
        }
    }
    Some((next, s))
}

#[derive(Debug, Clone)]
pub struct Solutions {
    /// Goal instances, one per successful derivation.
    pub answers: Vec<Term>,
    /// The search tree was finite within the depth bound.
    pub complete: bool,
}

/// Exhaustive search with iterative deepening up to `max_depth` steps per
/// derivation, selecting the leftmost atom.
pub fn solve(clauses: &[LpClause], goal: &Term, max_depth: usize) -> Solutions {
    let goal = pure_variant(goal);
    let first_free = goal.vars().iter().map(|v| v.id + 1).max().unwrap_or(1);
    let mut depth = 1;
    loop {
        let mut answers = Vec::new();
        let mut cut = false;
        search(clauses, vec![goal.clone()], &goal, Subst::new(), first_free, depth, &mut answers, &mut cut);
        if !cut || depth >= max_depth {
            return Solutions { answers, complete: !cut };
        }
        depth = (depth * 2).min(max_depth);
    }
}

#[allow(clippy::too_many_arguments)]
fn search(
    clauses: &[LpClause],
    resolvent: Vec<Term>,
    goal: &Term,
    acc: Subst,
    next: u64,
    depth: usize,
    answers: &mut Vec<Term>,
    cut: &mut bool,
) {
    if resolvent.is_empty() {
        answers.push(apply(goal, &acc));
        return;
    }
    if depth == 0 {
        *cut = true;
        return;
    }
    let (name, arity) = match resolvent[0].functor() {
        Some((n, a)) => (n.to_string(), a),
        None => return,
    };
    for c in clauses {
        if c.head.functor() != Some((name.as_str(), arity)) {
            continue;
        }
        if let Some((succ, s)) = lp_reduce(&resolvent, 0, c, next) {
            let mut acc2: Subst = acc.iter().map(|(k, v)| (*k, apply(v, &s))).collect();
            for (k, v) in s {
                acc2.entry(k).or_insert(v);
            }
            search(clauses, succ, goal, acc2, next + c.nvars, depth - 1, answers, cut);
        }
    }
}
