use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sfr_bench::{config, model, split};
use sfr_core::train::{train, Variant};
use sfr_core::Split;

fn steps(c: &mut Criterion) {
    let data = split(1000.0, Split::Train);
    let mut g = c.benchmark_group("train_10_steps");
    g.sample_size(10);
    for (variant, n_pde) in [(Variant::Full, 256), (Variant::Full, 1024), (Variant::NoPde, 0)] {
        let cfg = sfr_core::train::TrainConfig {
            variant,
            ..config(64, 10, n_pde.max(1))
        };
        let id = BenchmarkId::new(variant.as_str(), n_pde);
        g.bench_function(id, |b| {
            b.iter_batched(
                || model(variant, 64, 1000.0),
                |(m, domain)| train(m, &data, &domain, &cfg).unwrap(),
                criterion::BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

criterion_group!(benches, steps);
criterion_main!(benches);
