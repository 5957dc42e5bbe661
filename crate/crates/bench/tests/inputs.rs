use noma_bench::{default_network, FIXED_POINT_SNR};
use noma_core::rates::solve_fixed_point;
use noma_core::sca;

#[test]
fn benchmark_inputs_are_valid() {
    assert!(solve_fixed_point(&FIXED_POINT_SNR, 3).unwrap().v_star > 1.0);
    let (net, constraints) = default_network();
    let state = sca::run(&net, &constraints).unwrap();
    assert!(state.converged);
}
