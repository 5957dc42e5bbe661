//! Shared inputs for the criterion benchmarks in `benches/`.

use noma_core::scenario::default_scenario;
use noma_core::{ConstraintSet, Network};

/// Far-user SNRs of a three-antenna link, from strong to weak.
pub const FIXED_POINT_SNR: [f64; 3] = [40.0, 3.0, 0.2];

/// The shipped default scenario as a network and its constraints.
pub fn default_network() -> (Network, ConstraintSet) {
    let (topology, env, constraints) = default_scenario().parts();
    let net = Network::new(topology, &env).expect("default scenario has defined links");
    (net, constraints)
}
