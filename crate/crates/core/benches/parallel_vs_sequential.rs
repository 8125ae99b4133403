use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;
use tangos_core::model::{init_model, penalty_value_and_grads_with, ForwardTrace, MlpModel};
use tangos_core::numeric::{DenseMatrix, SeededRng};
use tangos_core::par::Execution;
use tangos_core::regularizers::TangosConfig;

fn setup(d_x: usize, batch: usize) -> (MlpModel, ForwardTrace) {
    let mut rng = SeededRng::new(1);
    let model = init_model(&[d_x, d_x + 1, d_x + 1, 1], 2).unwrap();
    let x = DenseMatrix::from_fn(batch, d_x, |_, _| rng.random_range(-1.5..1.5));
    let (_, trace) = model.forward(&x).unwrap();
    (model, trace)
}

fn run(model: &MlpModel, trace: &ForwardTrace, exec: Execution) {
    let cfg = TangosConfig::new(1.0, 0.1);
    let out =
        penalty_value_and_grads_with(model, trace, &cfg, &mut SeededRng::new(3), exec).unwrap();
    std::hint::black_box(out);
}

fn penalty(c: &mut Criterion) {
    let mut group = c.benchmark_group("penalty");
    for &(d_x, batch) in &[(17, 64), (17, 512), (40, 256)] {
        let (model, trace) = setup(d_x, batch);
        let id = format!("d{d_x}_b{batch}");
        group.bench_with_input(BenchmarkId::new("sequential", &id), &(), |b, _| {
            b.iter(|| run(&model, &trace, Execution::Sequential))
        });
        group.bench_with_input(BenchmarkId::new("parallel", &id), &(), |b, _| {
            b.iter(|| run(&model, &trace, Execution::Parallel))
        });
        // the global pool falls back to sequential on one core; an explicit
        // pool exercises the scheduled path regardless
        #[cfg(feature = "parallel")]
        {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(4)
                .build()
                .unwrap();
            group.bench_with_input(BenchmarkId::new("parallel_4_threads", &id), &(), |b, _| {
                b.iter(|| pool.install(|| run(&model, &trace, Execution::Parallel)))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, penalty);
criterion_main!(benches);
