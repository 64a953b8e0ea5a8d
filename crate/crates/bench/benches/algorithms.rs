use criterion::{black_box, criterion_group, criterion_main, Criterion};

use ita_bench::{delay_chain, models};
use ita_core::classgraph::{Caps, ClassGraph};
use ita_core::fixtures;
use ita_core::itaminus::{prime_family, to_ita_minus};
use ita_core::lpreach::{bounded_reach, fm};
use ita_core::tctl::{check, parse_formula, Options};

fn class_graphs(c: &mut Criterion) {
    for m in models() {
        c.bench_function(&format!("classgraph/{}", m.name), |b| {
            b.iter(|| ClassGraph::explore(black_box(&m), &[], &Caps::default()).unwrap())
        });
    }
}

fn fourier_motzkin(c: &mut Criterion) {
    for n in [4, 8, 12] {
        let cs = delay_chain(n);
        c.bench_function(&format!("fm/solve-chain-{n}"), |b| b.iter(|| fm::solve(black_box(&cs), n).unwrap()));
    }
}

fn translation(c: &mut Criterion) {
    let a2 = fixtures::a2();
    c.bench_function("to_ita_minus/A2", |b| b.iter(|| to_ita_minus(black_box(&a2), 10_000).unwrap()));
    let p = prime_family(3);
    c.bench_function("to_ita_minus/prime-3", |b| b.iter(|| to_ita_minus(black_box(&p), 100_000).unwrap()));
}

fn reachability(c: &mut Criterion) {
    for m in models() {
        let last = m.state_ids().last().unwrap();
        c.bench_function(&format!("bounded_reach/{}", m.name), |b| b.iter(|| bounded_reach(black_box(&m), last, 12).unwrap()));
    }
}

fn model_checking(c: &mut Criterion) {
    let a1 = fixtures::a1();
    let o = Options::for_model(&a1);
    for src in ["EF (q1 && x2 > x1)", "E true U{<=1} q2", "A true U{>=0} q2"] {
        let f = parse_formula(src).unwrap();
        c.bench_function(&format!("check/A1 {src}"), |b| b.iter(|| check(&a1, black_box(&f), &o).unwrap()));
    }
}

criterion_group!(benches, class_graphs, fourier_motzkin, translation, reachability, model_checking);
criterion_main!(benches);
