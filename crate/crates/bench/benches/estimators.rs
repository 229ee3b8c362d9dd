use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use relaxed_portfolio::estimators::{ledoit_wolf, poet};
use relaxed_portfolio::nodewise::{nodewise_precision, nodewise_row};
use relaxed_portfolio_bench::{centered, panel};

fn nodewise(c: &mut Criterion) {
    let mut group = c.benchmark_group("nodewise");
    group.sample_size(10);
    for p in [50, 100, 200] {
        let data = panel(p, 252);
        group.bench_with_input(BenchmarkId::new("precision", p), &data, |b, data| {
            b.iter(|| nodewise_precision(data).unwrap())
        });
    }
    let x = centered(200, 252);
    group.bench_function("single_row_p200", |b| b.iter(|| nodewise_row(&x, 0).unwrap()));
    group.finish();
}

fn baselines(c: &mut Criterion) {
    let mut group = c.benchmark_group("baselines");
    group.sample_size(10);
    for p in [50, 200] {
        let data = panel(p, 252);
        group.bench_with_input(BenchmarkId::new("ledoit_wolf", p), &data, |b, data| {
            b.iter(|| ledoit_wolf(data).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("poet", p), &data, |b, data| {
            b.iter(|| poet(data).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, nodewise, baselines);
criterion_main!(benches);
