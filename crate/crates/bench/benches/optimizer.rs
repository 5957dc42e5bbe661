use criterion::{black_box, criterion_group, criterion_main, Criterion};
use noma_bench::{default_network, FIXED_POINT_SNR};
use noma_core::montecarlo::monte_carlo_sum_rate;
use noma_core::rates::{approx_sum_rate, solve_fixed_point};
use noma_core::sca;

fn fixed_point(c: &mut Criterion) {
    c.bench_function("fixed_point_m3", |b| b.iter(|| solve_fixed_point(black_box(&FIXED_POINT_SNR), 3).unwrap()));
}

fn rates(c: &mut Criterion) {
    let (net, constraints) = default_network();
    let (power, _) = sca::initial_power(&net, &constraints).unwrap();
    c.bench_function("approx_sum_rate_default", |b| b.iter(|| approx_sum_rate(&net, black_box(&power)).unwrap()));
    c.bench_function("monte_carlo_1000_default", |b| b.iter(|| monte_carlo_sum_rate(&net, black_box(&power), 1000, 1)));
}

fn optimizer(c: &mut Criterion) {
    let (net, constraints) = default_network();
    let mut group = c.benchmark_group("sca");
    group.sample_size(20);
    group.bench_function("run_default", |b| b.iter(|| sca::run(&net, black_box(&constraints)).unwrap()));
    group.finish();
}

criterion_group!(benches, fixed_point, rates, optimizer);
criterion_main!(benches);
