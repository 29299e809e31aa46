use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pxm_core::exec::Parallelism;
use pxm_core::models::{Model, ModelConfig};
use pxm_core::prob_embed::{sampled_sq_distance, ProbEmbedding};
use pxm_core::signal::KorsMatrix;
use pxm_core::synthdata::{generate_cohort_with, CohortConfig};

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("rayon", Parallelism::Auto)];

fn cohort_generation(c: &mut Criterion) {
    let cfg = CohortConfig { samples_per_class: 8, ..Default::default() };
    let kors = KorsMatrix::default();
    let mut group = c.benchmark_group("generate_cohort");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| generate_cohort_with(&cfg, &kors, mode).unwrap())
        });
    }
    group.finish();
}

fn ecg_encoding(c: &mut Criterion) {
    let cfg = CohortConfig { samples_per_class: 4, ..Default::default() };
    let cohort = generate_cohort_with(&cfg, &KorsMatrix::default(), Parallelism::Auto).unwrap();
    let windows: Vec<_> = cohort.samples.iter().map(|s| s.signal.clone()).collect();
    let model = Model::init(&ModelConfig::desk(), 0).unwrap();
    let mut group = c.benchmark_group("encode_ecg_batch");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| model.encode_ecg_batch(&windows, mode).unwrap())
        });
    }
    group.finish();
}

fn monte_carlo_distance(c: &mut Criterion) {
    let a = ProbEmbedding::new(vec![0.3; 8], vec![-1.0; 8]).unwrap();
    let b = ProbEmbedding::new(vec![-0.2; 8], vec![-0.5; 8]).unwrap();
    let mut group = c.benchmark_group("sampled_sq_distance");
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| sampled_sq_distance(&a, &b, 200_000, 7, mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, cohort_generation, ecg_encoding, monte_carlo_distance);
criterion_main!(benches);
