//! Scenario files, random topologies, sweeps and result persistence.

pub mod config;
pub mod output;
pub mod random;
pub mod sweep;

pub use config::{
    default_scenario, load_config, ConstraintConfig, QosFloor, ScenarioConfig, Scheme, SimulationConfig, SweepAxis,
    SweepSpec, TopologySource, MAX_SEED,
};
pub use output::{config_hash, emit_results, read_csv, write_csv, Summary};
pub use random::{has_qos_witness, passes_sic_screen, random_topology, RandomTopologyParams};
pub use sweep::{
    build_instance, check_allocation, convergence_study, run_scenario, run_scheme, run_sweep, ConvergenceRun,
    ConvergenceStudy, Instance, RunRecord,
};
