use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use evdpor::bench_programs::generate;
use evdpor::{brute_force, Algorithm};
use evdpor_bench::{sized, traces};

fn prolific(c: &mut Criterion) {
    let mut g = c.benchmark_group("prolific_cycle");
    g.sample_size(10);
    for n in 3..=7 {
        let p = sized("prolific_cycle", n);
        g.bench_with_input(BenchmarkId::new("event-dpor", n), &p, |b, p| b.iter(|| traces(p, Algorithm::EventDpor)));
        if n <= 6 {
            g.bench_with_input(BenchmarkId::new("coarse", n), &p, |b, p| b.iter(|| traces(p, Algorithm::Coarse)));
        }
    }
    g.finish();
}

fn plb(c: &mut Criterion) {
    let mut g = c.benchmark_group("plb");
    for n in [2, 6, 12] {
        let p = sized("plb", n);
        g.bench_with_input(BenchmarkId::new("event-dpor", n), &p, |b, p| b.iter(|| traces(p, Algorithm::EventDpor)));
        g.bench_with_input(BenchmarkId::new("coarse", n), &p, |b, p| b.iter(|| traces(p, Algorithm::Coarse)));
    }
    g.finish();
}

fn figures(c: &mut Criterion) {
    let mut g = c.benchmark_group("figures");
    for name in ["fig1_wrr", "fig3_branch", "fig4_two_handlers"] {
        let p = generate(name, &Default::default()).unwrap();
        g.bench_with_input(BenchmarkId::new("event-dpor", name), &p, |b, p| b.iter(|| traces(p, Algorithm::EventDpor)));
        g.bench_with_input(BenchmarkId::new("brute", name), &p, |b, p| b.iter(|| brute_force(p, 10_000_000).unwrap().keys.len()));
    }
    g.finish();
}

criterion_group!(benches, prolific, plb, figures);
criterion_main!(benches);
