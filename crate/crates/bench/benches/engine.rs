use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use glp_bench::{corpus_program, merge_goal, run_goal, simulate};
use glp_core::parser::parse_term;
use glp_core::store::Store;
use glp_core::trace::Trace;
use glp_core::unify::writer_unify;
use glp_core::verifier;

fn merge(c: &mut Criterion) {
    let p = corpus_program("merge");
    let mut g = c.benchmark_group("merge");
    // every reduce record carries the whole resolved goal, so cost grows with n squared
    g.sample_size(10);
    for n in [10, 100, 1000] {
        let goal = merge_goal(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &goal, |b, goal| b.iter(|| run_goal(p.clone(), black_box(goal))));
    }
    g.finish();
}

fn unify(c: &mut Criterion) {
    let q = parse_term("f(g(X, [1,2,3|Xs?]), h(Y?, a)) = f(g(b, [1,2,3,4]), h(c, Z))").unwrap();
    let t = q.instantiate(0);
    let (a, b) = (t.args()[0].clone(), t.args()[1].clone());
    let s = Store::new();
    c.bench_function("writer_unify", |bn| bn.iter(|| writer_unify(black_box(&a), black_box(&b), &s)));
}

fn world(c: &mut Criterion) {
    c.bench_function("sim intro", |b| b.iter(|| simulate(black_box("intro"))));
}

fn verify(c: &mut Criterion) {
    let t = Trace::parse(&simulate("intro").render()).unwrap();
    c.bench_function("verify intro", |b| b.iter(|| verifier::run_checks(black_box(&t), verifier::CHECKS, 0)));
    let goal = glp_core::corpus::entry("interlaced").unwrap().runs[0].goal.clone();
    let s = run_goal(corpus_program("interlaced"), &goal);
    let t = Trace::parse(&s.trace().render()).unwrap();
    c.bench_function("verify interlaced", |b| b.iter(|| verifier::run_checks(black_box(&t), verifier::CHECKS, 0)));
}

criterion_group!(benches, merge, unify, world, verify);
criterion_main!(benches);
