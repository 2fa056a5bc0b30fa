use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use glp_core::lp_oracle::{apply, is_variant, mgu, pure_variant};
use glp_core::parser::{parse_canonical, Module};
use glp_core::program::Program;
use glp_core::security::{Provider, ProviderKind, Stage};
use glp_core::session::Session;
use glp_core::store::{Bindings, Store};
use glp_core::term::Term;
use glp_core::unify::{writer_unify, UnifyOutcome};
use glp_core::verifier;
use proptest::prelude::*;

fn var_in(ids: std::ops::Range<u64>) -> impl Strategy<Value = Term> {
    (ids, any::<bool>()).prop_map(|(id, r)| if r { Term::reader(id) } else { Term::writer(id) })
}

fn term_over(ids: std::ops::Range<u64>) -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![
        var_in(ids),
        prop_oneof![Just("a"), Just("b"), Just("[]"), Just("hello world")].prop_map(Term::atom),
        (-3i64..4).prop_map(Term::int),
    ];
    leaf.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|t| Term::cmp("f", vec![t])),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::cmp("g", vec![a, b])),
            (inner.clone(), inner).prop_map(|(a, b)| Term::cons(a, b)),
        ]
    })
}

fn small_term() -> impl Strategy<Value = Term> {
    term_over(0..4)
}

fn ground_term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![Just(Term::atom("a")), Just(Term::atom("b")), (0i64..3).prop_map(Term::int)];
    leaf.prop_recursive(2, 6, 2, |inner| inner.prop_map(|t| Term::cmp("f", vec![t])))
}

/// Writer bindings as a store; readers see them through their pair.
fn store_of(bindings: &[(u64, Term)]) -> Store {
    let mut s = Store::new();
    for (id, t) in bindings {
        s.bind(*id, t.clone()).unwrap();
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn canonical_print_round_trips(t in small_term()) {
        prop_assert_eq!(parse_canonical(&t.to_string()).unwrap(), t);
    }

    #[test]
    fn mgu_is_idempotent(a in small_term(), b in small_term(), t in small_term()) {
        if let Some(s) = mgu(&[(pure_variant(&a), pure_variant(&b))]) {
            let once = apply(&pure_variant(&t), &s);
            prop_assert_eq!(apply(&once, &s), once);
        }
    }

    #[test]
    fn writer_unify_is_deterministic(a in small_term(), b in small_term()) {
        let s = Store::new();
        prop_assert_eq!(writer_unify(&a, &b, &s), writer_unify(&a, &b, &s));
    }

    /// A writer mgu unifies both sides, binds no reader and is exactly as
    /// general as the plain mgu of the pure reading.
    #[test]
    fn writer_mgu_is_most_general(a in small_term(), b in small_term()) {
        let pure = mgu(&[(pure_variant(&a), pure_variant(&b))]);
        match writer_unify(&a, &b, &Store::new()) {
            UnifyOutcome::Success(sigma) => {
                let st = store_of(&sigma);
                let (ra, rb) = (st.resolve(&a).unwrap(), st.resolve(&b).unwrap());
                prop_assert_eq!(pure_variant(&ra), pure_variant(&rb));
                let theta = pure.expect("writer mgu implies a plain unifier");
                let by_theta = apply(&pure_variant(&a), &theta);
                prop_assert!(is_variant(&[pure_variant(&ra)], &[by_theta]));
                // the values mention no writer that was bound
                for (_, v) in &sigma {
                    for u in v.vars() {
                        prop_assert!(!sigma.iter().any(|(id, _)| *id == u.id));
                    }
                }
            }
            UnifyOutcome::Suspend(_) => prop_assert!(pure.is_some()),
            UnifyOutcome::Fail(_) => {}
        }
    }

    /// Giving a blocker a value never makes the outcome less defined: the
    /// new blockers are the old ones minus the instantiated reader, readers
    /// the value brought in, or readers at the positions the blocker was
    /// matched against (now compared for the first time).
    #[test]
    fn suspension_is_monotone(a in term_over(0..3), b in term_over(3..6), v in term_over(10..12), pick in 0usize..4) {
        if let UnifyOutcome::Suspend(w) = writer_unify(&a, &b, &Store::new()) {
            let blocker = *w.iter().nth(pick % w.len()).unwrap();
            let st = store_of(&[(blocker, v.clone())]);
            let mut fresh: BTreeSet<u64> = v.vars().iter().map(|x| x.id).collect();
            let s = mgu(&[(pure_variant(&a), pure_variant(&b))]).expect("suspension implies a pure mgu");
            let matched = apply(&Term::writer(blocker), &s);
            fresh.extend(matched.vars().iter().map(|x| x.id));
            for x in a.vars().iter().chain(b.vars().iter()) {
                if apply(&Term::writer(x.id), &s) == matched {
                    fresh.insert(x.id);
                }
            }
            match writer_unify(&a, &b, &st) {
                UnifyOutcome::Suspend(w2) => {
                    for id in &w2 {
                        prop_assert!(*id != blocker && (w.contains(id) || fresh.contains(id)), "{:?} -> {:?}", w, w2);
                    }
                }
                UnifyOutcome::Success(_) | UnifyOutcome::Fail(_) => {}
            }
        }
    }

    /// Instantiating readers of one side with ground values keeps a
    /// successful unification successful (the sides share no variables).
    #[test]
    fn success_survives_reader_instantiation(a in term_over(0..3), b in term_over(3..6), vals in proptest::collection::vec(ground_term(), 3)) {
        if let UnifyOutcome::Success(_) = writer_unify(&a, &b, &Store::new()) {
            let readers: BTreeSet<u64> = a.vars().iter().filter(|x| x.is_reader()).map(|x| x.id).collect();
            let writers: BTreeSet<u64> = a.vars().iter().filter(|x| x.is_writer()).map(|x| x.id).collect();
            let tau: Vec<(u64, Term)> = readers
                .iter()
                .filter(|id| !writers.contains(id))
                .map(|id| (*id, vals[*id as usize].clone()))
                .collect();
            let st = store_of(&tau);
            prop_assert!(matches!(writer_unify(&a, &b, &st), UnifyOutcome::Success(_)));
        }
    }

    #[test]
    fn store_is_single_assignment(id in 0u64..5, x in ground_term(), y in ground_term()) {
        let mut s = Store::new();
        s.bind(id, x.clone()).unwrap();
        prop_assert!(s.bind(id, y).is_err());
        prop_assert_eq!(s.deref(&Term::reader(id)), x.clone());
        prop_assert_eq!(s.deref(&Term::writer(id)), x);
    }
}

fn merge_program() -> Arc<Program> {
    let e = glp_core::corpus::entry("merge").unwrap();
    Arc::new(e.program().unwrap())
}

fn list_text(items: &[i64]) -> String {
    format!("[{}]", items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Random merge runs: every step keeps goals in exactly one of
    /// active, suspended or failed, failures never disappear, and the
    /// trace passes the verifier.
    #[test]
    fn merge_runs_keep_invariants(xs in proptest::collection::vec(0i64..9, 0..6), ys in proptest::collection::vec(10i64..19, 0..6), open in any::<bool>()) {
        let ys_text = if open { format!("[{}|_]", ys.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")) } else { list_text(&ys) };
        let ys_text = if open && ys.is_empty() { "_".to_string() } else { ys_text };
        let goal = format!("merge({}, {}, Zs)", list_text(&xs), ys_text);
        let mut s = Session::start(merge_program(), &goal).unwrap();
        let mut failed = 0;
        for _ in 0..200 {
            s.run(1).unwrap();
            let active: BTreeSet<u64> = s.engine.active().map(|(g, _)| g).collect();
            let susp: BTreeSet<u64> = s.engine.suspended().map(|(g, _, _)| g).collect();
            let fail: BTreeSet<u64> = s.engine.failed().iter().map(|(g, _, _)| *g).collect();
            prop_assert!(active.is_disjoint(&susp) && active.is_disjoint(&fail) && susp.is_disjoint(&fail));
            prop_assert!(fail.len() >= failed);
            failed = fail.len();
            if !s.engine.has_active() {
                break;
            }
        }
        let t = s.trace();
        for v in verifier::run_checks(&t, verifier::CHECKS, 1) {
            prop_assert!(v.ok, "{}", v);
        }
        if !open {
            let zs = glp_core::corpus::list_items(&s.binding("Zs").unwrap()).unwrap();
            let parts = vec![xs.iter().map(|i| Term::int(*i)).collect(), ys.iter().map(|i| Term::int(*i)).collect()];
            prop_assert!(glp_core::corpus::is_interleaving(&zs, &parts));
        }
    }

    /// The pure logic-program reading finds the engine's answer.
    #[test]
    fn engine_answer_is_a_logical_consequence(xs in proptest::collection::vec(0i64..9, 0..3), ys in proptest::collection::vec(10i64..19, 0..3)) {
        let p = merge_program();
        let goal = format!("merge({}, {}, Zs)", list_text(&xs), list_text(&ys));
        let mut s = Session::start(p.clone(), &goal).unwrap();
        s.run(1000).unwrap();
        let answer = pure_variant(&s.engine.store.resolve(&s.goal).unwrap());
        let clauses: Vec<_> = p.lookup("merge", 3).unwrap().clauses.iter().map(|c| glp_core::lp_oracle::LpClause::from_clause(c)).collect();
        let sols = glp_core::lp_oracle::solve(&clauses, &s.goal, 16);
        prop_assert!(sols.answers.contains(&answer));
    }
}

#[test]
fn corpus_modules_round_trip() {
    for e in glp_core::corpus::load_corpus().unwrap() {
        let m = e.module().unwrap();
        let again = Module::parse(&e.name, &m.print()).unwrap();
        let strip = |m: &Module| m.clauses.iter().map(|c| (c.head.clone(), c.guard.clone(), c.body.clone())).collect::<Vec<_>>();
        assert_eq!(strip(&m), strip(&again), "{}", e.name);
    }
    for (name, src) in glp_core::corpus::LISTINGS {
        let m = Module::parse(name, src).unwrap();
        let again = Module::parse(name, &m.print()).unwrap();
        assert_eq!(m.print(), again.print(), "{name}");
    }
}

/// A suspended goal reduces again only after one of its blockers got a
/// value or lost its writer.
#[test]
fn suspended_goals_wait_for_their_blockers() {
    for e in glp_core::corpus::load_corpus().unwrap() {
        let p = Arc::new(e.program().unwrap());
        for r in &e.runs {
            let (s, _, _) = glp_core::corpus::check_run(p.clone(), r).unwrap();
            let mut waiting: HashMap<u64, BTreeSet<u64>> = HashMap::new();
            let mut released: BTreeSet<u64> = BTreeSet::new();
            for rec in &s.engine.trace {
                let gid: u64 = rec.get("gid").and_then(|g| g.parse().ok()).unwrap_or(0);
                if let Some(w) = waiting.get(&gid) {
                    assert!(
                        !w.is_disjoint(&released),
                        "{}: goal {gid} resumed at step {} with no blocker released",
                        e.name,
                        rec.step
                    );
                    waiting.remove(&gid);
                }
                for key in ["sigma", "bind"] {
                    if let Some(v) = rec.get(key) {
                        for b in glp_core::corpus::list_items(&parse_canonical(v).unwrap()).unwrap() {
                            if let Term::Var(x) = &b.args()[0] {
                                released.insert(x.id);
                            }
                        }
                    }
                }
                if let Some(v) = rec.get("abandoned") {
                    for x in glp_core::corpus::list_items(&parse_canonical(v).unwrap()).unwrap() {
                        released.extend(x.vars().iter().map(|x| x.id));
                    }
                }
                if rec.kind == "suspend" {
                    let on = glp_core::corpus::list_items(&parse_canonical(rec.get("on").unwrap()).unwrap()).unwrap();
                    let set: BTreeSet<u64> = on.iter().flat_map(|t| t.vars()).map(|v| v.id).collect();
                    assert!(set.is_disjoint(&released), "{}: suspended on a released reader", e.name);
                    waiting.insert(gid, set);
                }
            }
        }
    }
}

fn providers() -> [ProviderKind; 2] {
    [ProviderKind::Mock, ProviderKind::Real]
}

fn triad(kind: ProviderKind, payload: &[u8], step: u64, pos: usize, flip: u8) -> Result<(), TestCaseError> {
    let mut p = Provider::new(kind);
    let a = p.keypair("alice");
    let b = p.keypair("bob");
    let c = p.keypair("carol");
    let known = vec![a.public.clone(), b.public.clone(), c.public.clone()];
    let env = p.seal(payload, "module-hash", step, &a, &b.public).to_bytes();

    let opened = p.open(&env, &b, &known).map_err(|s| TestCaseError::fail(format!("{s:?}")))?;
    prop_assert_eq!(&opened.payload, &payload.to_vec());
    prop_assert_eq!(&opened.sender, &a.public);
    prop_assert_eq!(p.signers(&env, payload, &known), vec![a.public.clone()]);

    prop_assert!(p.open(&env, &c, &known).is_err());
    prop_assert!(p.open(&env, &a, &known).is_err());

    let mut bad = env.clone();
    let i = pos % bad.len();
    bad[i] ^= flip.max(1);
    let r = p.open(&bad, &b, &known);
    prop_assert!(r.is_err(), "byte {} of {} accepted", i, bad.len());
    let _: Stage = r.unwrap_err();
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mock_envelopes_triad(payload in proptest::collection::vec(any::<u8>(), 0..64), step in any::<u64>(), pos in any::<usize>(), flip in any::<u8>()) {
        triad(providers()[0], &payload, step, pos, flip)?;
    }

    #[test]
    fn real_envelopes_triad(payload in proptest::collection::vec(any::<u8>(), 0..64), step in any::<u64>(), pos in any::<usize>(), flip in any::<u8>()) {
        triad(providers()[1], &payload, step, pos, flip)?;
    }
}
