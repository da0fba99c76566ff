use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use cfleo_bench::ndarray::Array2;
use cfleo_bench::{slot_problem, slot_sized_ls, slot_sized_pilots};
use cfleo_core::allocation::{ga_solve, GaParams};

fn rate_evaluation(c: &mut Criterion) {
    let mut group = c.benchmark_group("closed_form_rate");
    for (m, k) in [(8usize, 40usize), (32, 40)] {
        let ls = slot_sized_ls(m, k);
        let pa = slot_sized_pilots(k);
        let problem = slot_problem(&ls, &pa);
        let ctx = problem.context();
        let power = Array2::from_elem((m, k), 31.6 / k as f64);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{m}x{k}")), &(), |b, _| {
            b.iter(|| ctx.evaluate(black_box(&power)).unwrap())
        });
    }
    group.finish();
}

fn ga_slot(c: &mut Criterion) {
    let ls = slot_sized_ls(8, 40);
    let pa = slot_sized_pilots(40);
    let problem = slot_problem(&ls, &pa);
    let ga = GaParams {
        population: 20,
        generations: 20,
        seed: 1,
        ..GaParams::default()
    };
    c.bench_function("ga_solve_8x40_20x20", |b| {
        b.iter(|| ga_solve(black_box(&problem), black_box(&ga)))
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = rate_evaluation, ga_slot
}
criterion_main!(benches);
