use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use ldpq_core::hadamard::{decode, fwht_in_place, HadamardContext, ReportCounts};
use ldpq_core::SeedStream;
use rand::Rng;

fn bench_fwht(c: &mut Criterion) {
    let mut group = c.benchmark_group("fwht");
    for log in [6u32, 10, 14, 18] {
        let size = 1usize << log;
        let mut rng = SeedStream::new(1).rng();
        let input: Vec<f64> = (0..size).map(|_| rng.random_range(-1.0..1.0)).collect();
        group.throughput(Throughput::Elements(size as u64));
        group.bench_with_input(BenchmarkId::from_parameter(size), &input, |b, input| {
            b.iter_batched_ref(
                || input.clone(),
                |x| fwht_in_place(black_box(x)).unwrap(),
                criterion::BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn bench_decode(c: &mut Criterion) {
    let mut group = c.benchmark_group("hadamard_decode");
    for domain_size in [100usize, 1000, 10_000] {
        let ctx = HadamardContext::new(domain_size, 1.0).unwrap();
        let mut rng = SeedStream::new(2).rng();
        let counts: Vec<u64> = (0..ctx.padded_size())
            .map(|_| rng.random_range(0..100))
            .collect();
        let counts = ReportCounts::from_counts(counts);
        group.bench_with_input(
            BenchmarkId::from_parameter(domain_size),
            &counts,
            |b, counts| b.iter(|| decode(black_box(counts), &ctx).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_fwht, bench_decode);
criterion_main!(benches);
