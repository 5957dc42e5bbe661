//! Parameter sweeps, single runs and the convergence study.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::PowerAllocation;
use crate::baselines::{self, oma_noise, oma_user_rates};
use crate::channel::{dbm_to_watts, Topology};
use crate::error::{Error, Result};
use crate::montecarlo::{derive_seed, monte_carlo_sum_rate, monte_carlo_sum_with};
use crate::network::Network;
use crate::rates::{max_satellite_leakage, sic_cap, user_rates};
use crate::sca::{self, AccessScheme, ConstraintSet, OptimizerOptions, OptimizerState};
use crate::scenario::config::{ScenarioConfig, Scheme, SweepAxis, SweepSpec, TopologySource};
use crate::scenario::random::random_topology;

/// Relative slack on power and leakage caps when re-checking an allocation.
pub const CAP_TOLERANCE: f64 = 1e-9;
/// Absolute slack on rate floors (bits/s/Hz).
pub const RATE_TOLERANCE: f64 = 1e-6;

/// One scheme evaluated at one sweep point and repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario_id: String,
    pub scheme: Scheme,
    pub axis: Option<SweepAxis>,
    pub axis_value: Option<f64>,
    pub repetition: usize,
    /// Master seed the record was produced from.
    pub seed: u64,
    /// Weighted approximate sum rate (bits/s/Hz).
    pub sum_rate_approx: f64,
    pub sum_rate_mc: f64,
    pub mc_stderr: f64,
    /// Unweighted per-user approximate rates `[k][m]`.
    pub rates: Vec<[f64; 2]>,
    pub leakage_w: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_ms: f64,
    pub power: Option<PowerAllocation>,
    /// First constraint the allocation violates, if any.
    pub violation: Option<String>,
    pub error: Option<String>,
}

/// A fully specified problem: topology plus limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub topology: Topology,
    pub constraints: ConstraintSet,
}

impl Instance {
    pub fn network(&self, config: &ScenarioConfig) -> Result<Network> {
        Network::new(self.topology.clone(), &config.environment)
    }
}

fn apply_axis(config: &ScenarioConfig, mut instance: Instance, axis: SweepAxis, value: f64) -> Instance {
    match axis {
        SweepAxis::PMax => instance.constraints.p_max = value,
        SweepAxis::QosFloor => instance.constraints.qos_floor.iter_mut().for_each(|r| *r = value),
        SweepAxis::LeakageCap => instance.constraints.leakage_cap = dbm_to_watts(value),
        SweepAxis::TbsUavMix => instance.topology = instance.topology.with_uav_count(value as usize, &config.environment),
    }
    instance
}

fn topology_seed(seed: u64, repetition: usize) -> u64 {
    derive_seed(seed, repetition as u64)
}

fn mc_seed(seed: u64, point: usize, repetition: usize) -> u64 {
    derive_seed(derive_seed(seed, 1 << 32 | point as u64), repetition as u64)
}

/// Rebuilds the instance behind a record: the base topology of the
/// repetition with the axis value applied.
pub fn build_instance(
    config: &ScenarioConfig,
    source: TopologySource,
    axis: Option<(SweepAxis, f64)>,
    repetition: usize,
    seed: u64,
) -> Result<Instance> {
    let mut constraints = config.constraint_set();
    let topology = match source {
        TopologySource::Config => config.topology(),
        TopologySource::Random => {
            let params = config.random.clone().unwrap_or_default();
            let topology = random_topology(topology_seed(seed, repetition), &params, &config.environment, &constraints)?;
            // A generator with a different cluster count reuses the first floor.
            if topology.num_clusters() != constraints.qos_floor.len() {
                let r = constraints.qos_floor.first().copied().unwrap_or(0.0);
                constraints.qos_floor = vec![r; topology.num_clusters()];
            }
            topology
        }
    };
    let instance = Instance { topology, constraints };
    Ok(match axis {
        Some((a, v)) => apply_axis(config, instance, a, v),
        None => instance,
    })
}

/// Checks an allocation against every constraint of the problem: sign,
/// node caps, cluster budgets, leakage, far-user floors and, for NOMA, the
/// SIC decodability condition.
pub fn check_allocation(
    net: &Network,
    constraints: &ConstraintSet,
    power: &PowerAllocation,
    scheme: Scheme,
    split: f64,
) -> Result<Option<String>> {
    if !power.shape_matches(&net.topology) {
        return Ok(Some("allocation shape does not match the topology".into()));
    }
    let over = |value: f64, cap: f64| value > cap * (1.0 + CAP_TOLERANCE);
    for k in 0..net.num_clusters() {
        for m in 0..2 {
            for n in 0..net.num_nodes(k) {
                if power.get(k, m, n) < 0.0 {
                    return Ok(Some(format!("negative power at [{k}][{m}][{n}]")));
                }
            }
        }
        for n in 0..net.num_nodes(k) {
            let cap = match net.topology.clusters[k].node_kind(n) {
                crate::channel::NodeKind::Tbs => constraints.p_tbs_max,
                crate::channel::NodeKind::Uav => constraints.p_uav_max,
            };
            if over(power.node_total(k, n), cap) {
                return Ok(Some(format!("node cap exceeded in cluster {k}, node {n}")));
            }
        }
        if over(power.cluster_total(k), constraints.p_max) {
            return Ok(Some(format!("budget exceeded in cluster {k}")));
        }
    }
    for j in 0..net.num_sat_users() {
        let leak = crate::rates::satellite_leakage(net, power, j);
        if over(leak, constraints.leakage_cap) {
            return Ok(Some(format!("leakage cap exceeded at satellite user {j}")));
        }
    }
    let rates = if scheme.is_orthogonal() { oma_user_rates(net, power)? } else { user_rates(net, power)? };
    let far_weight = if scheme.is_orthogonal() { 1.0 - split } else { 1.0 };
    for (k, r) in rates.iter().enumerate() {
        if far_weight * r[1] < constraints.qos_floor[k] - RATE_TOLERANCE {
            return Ok(Some(format!("QoS floor missed in cluster {k}")));
        }
        if !scheme.is_orthogonal() && sic_cap(net, power, k)? < r[1] - RATE_TOLERANCE {
            return Ok(Some(format!("SIC condition fails in cluster {k}")));
        }
    }
    Ok(None)
}

/// Result of running one allocation scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeOutcome {
    pub power: PowerAllocation,
    pub sum_rate: f64,
    pub rates: Vec<[f64; 2]>,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

fn from_state(result: Result<OptimizerState>) -> Result<OptimizerState> {
    match result {
        Err(Error::NotConverged(state)) => Ok(*state),
        other => other,
    }
}

pub fn options_for(config: &ScenarioConfig) -> OptimizerOptions {
    OptimizerOptions { max_iterations: config.simulation.max_iterations, ..OptimizerOptions::default() }
}

/// Runs one scheme; an optimizer that hits its iteration cap still returns
/// its last iterate with `converged = false`.
pub fn run_scheme(
    net: &Network,
    constraints: &ConstraintSet,
    scheme: Scheme,
    split: f64,
    options: &OptimizerOptions,
) -> Result<SchemeOutcome> {
    let (power, iterations, converged, trace) = match scheme {
        Scheme::ScaNoma | Scheme::OmaSca => {
            let access = if scheme == Scheme::ScaNoma { AccessScheme::Noma } else { AccessScheme::Orthogonal { split } };
            let state = from_state(sca::run_with(net, constraints, access, options))?;
            (state.power, state.iteration, state.converged, state.objective_trace)
        }
        Scheme::EqualPowerNoma | Scheme::OmaEqual => (baselines::equal_power(net, constraints)?, 0, true, Vec::new()),
    };
    let (rates, sum_rate) = if scheme.is_orthogonal() {
        (oma_user_rates(net, &power)?, baselines::oma_rate(net, &power, split)?)
    } else {
        let rates = user_rates(net, &power)?;
        let sum = rates.iter().map(|r| r[0] + r[1]).sum();
        (rates, sum)
    };
    Ok(SchemeOutcome { power, sum_rate, rates, iterations, converged, objective_trace: trace })
}

/// Monte Carlo counterpart of the scheme's weighted sum rate.
pub fn monte_carlo_for(net: &Network, power: &PowerAllocation, scheme: Scheme, split: f64, samples: usize, seed: u64) -> (f64, f64) {
    let est = if scheme.is_orthogonal() {
        monte_carlo_sum_with(net, power, samples, seed, [split, 1.0 - split], |k, m| oma_noise(net, power, k, m)).0
    } else {
        monte_carlo_sum_rate(net, power, samples, seed)
    };
    (est.mean, est.std_err)
}

struct Point<'a> {
    config: &'a ScenarioConfig,
    source: TopologySource,
    axis: Option<(SweepAxis, f64)>,
    index: usize,
    repetition: usize,
    seed: u64,
}

fn failed_record(base: RunRecord, err: &Error) -> RunRecord {
    RunRecord { error: Some(err.to_string()), ..base }
}

fn run_point(point: &Point<'_>, schemes: &[Scheme]) -> Vec<RunRecord> {
    let config = point.config;
    let split = config.simulation.oma_split;
    let base = |scheme: Scheme| RunRecord {
        scenario_id: format!("{}-p{}-r{}", config.name, point.index, point.repetition),
        scheme,
        axis: point.axis.map(|a| a.0),
        axis_value: point.axis.map(|a| a.1),
        repetition: point.repetition,
        seed: point.seed,
        sum_rate_approx: f64::NAN,
        sum_rate_mc: f64::NAN,
        mc_stderr: f64::NAN,
        rates: Vec::new(),
        leakage_w: f64::NAN,
        iterations: 0,
        converged: false,
        wall_ms: 0.0,
        power: None,
        violation: None,
        error: None,
    };
    let setup = build_instance(config, point.source, point.axis, point.repetition, point.seed)
        .and_then(|inst| Ok((inst.network(config)?, inst)));
    let (net, instance) = match setup {
        Ok(v) => v,
        Err(e) => return schemes.iter().map(|&s| failed_record(base(s), &e)).collect(),
    };
    let options = options_for(config);
    let mc = mc_seed(point.seed, point.index, point.repetition);
    schemes
        .iter()
        .map(|&scheme| {
            let start = Instant::now();
            let outcome = run_scheme(&net, &instance.constraints, scheme, split, &options);
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let outcome = match outcome {
                Ok(o) => o,
                Err(e) => return RunRecord { wall_ms, ..failed_record(base(scheme), &e) },
            };
            let (sum_rate_mc, mc_stderr) =
                monte_carlo_for(&net, &outcome.power, scheme, split, config.simulation.mc_samples, mc);
            let violation = match check_allocation(&net, &instance.constraints, &outcome.power, scheme, split) {
                Ok(v) => v,
                Err(e) => Some(e.to_string()),
            };
            RunRecord {
                sum_rate_approx: outcome.sum_rate,
                sum_rate_mc,
                mc_stderr,
                rates: outcome.rates,
                leakage_w: max_satellite_leakage(&net, &outcome.power),
                iterations: outcome.iterations,
                converged: outcome.converged,
                wall_ms,
                power: Some(outcome.power),
                violation,
                ..base(scheme)
            }
        })
        .collect()
}

/// Runs every axis value and repetition in parallel. Records come back
/// ordered by (axis value, repetition, scheme); failures are recorded, not
/// propagated.
pub fn run_sweep(spec: &SweepSpec, config: &ScenarioConfig, seed: u64) -> Result<Vec<RunRecord>> {
    spec.validate(&config.topology())?;
    let points: Vec<Point<'_>> = spec
        .values
        .iter()
        .enumerate()
        .flat_map(|(index, &value)| {
            (0..spec.repetitions).map(move |repetition| Point {
                config,
                source: spec.topology,
                axis: Some((spec.axis, value)),
                index,
                repetition,
                seed,
            })
        })
        .collect();
    Ok(points.par_iter().flat_map_iter(|p| run_point(p, &spec.schemes)).collect())
}

/// Evaluates the scenario file as written, without a sweep axis.
pub fn run_scenario(config: &ScenarioConfig, schemes: &[Scheme], seed: u64) -> Vec<RunRecord> {
    let point = Point { config, source: TopologySource::Config, axis: None, index: 0, repetition: 0, seed };
    run_point(&point, schemes)
}

/// True when `trace` never drops by more than `tol` relative to its scale.
pub fn is_monotone(trace: &[f64], tol: f64) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - tol * w[0].abs().max(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRun {
    pub index: usize,
    pub topology_seed: u64,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub monotone: bool,
    pub objective_trace: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub p_max: f64,
    pub seed: u64,
    pub runs: Vec<ConvergenceRun>,
}

impl ConvergenceStudy {
    /// Iteration count -> number of converged runs.
    pub fn histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for r in self.runs.iter().filter(|r| r.converged) {
            *h.entry(r.iterations.unwrap_or(0)).or_insert(0) += 1;
        }
        h
    }

    pub fn failures(&self) -> Vec<&ConvergenceRun> {
        self.runs.iter().filter(|r| !r.converged).collect()
    }

    pub fn converged_within(&self, iterations: usize) -> usize {
        self.runs.iter().filter(|r| r.converged && r.iterations.is_some_and(|i| i <= iterations)).count()
    }
}

/// Runs the NOMA optimizer on `count` random topologies at budget `p_max`.
pub fn convergence_study(config: &ScenarioConfig, count: usize, p_max: f64, seed: u64) -> ConvergenceStudy {
    let options = options_for(config);
    let runs = (0..count)
        .into_par_iter()
        .map(|index| {
            let topology_seed = topology_seed(seed, index);
            let mut failed = ConvergenceRun {
                index,
                topology_seed,
                iterations: None,
                converged: false,
                monotone: false,
                objective_trace: Vec::new(),
                error: None,
            };
            let result = build_instance(config, TopologySource::Random, Some((SweepAxis::PMax, p_max)), index, seed)
                .and_then(|inst| Ok((inst.network(config)?, inst)))
                .and_then(|(net, inst)| from_state(sca::run_with(&net, &inst.constraints, AccessScheme::Noma, &options)));
            match result {
                Ok(state) => ConvergenceRun {
                    iterations: Some(state.iteration),
                    converged: state.converged,
                    monotone: is_monotone(&state.objective_trace, 1e-9),
                    objective_trace: state.objective_trace,
                    ..failed
                },
                Err(e) => {
                    failed.error = Some(e.to_string());
                    failed
                }
            }
        })
        .collect();
    ConvergenceStudy { p_max, seed, runs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::config::default_scenario;

    fn quick_config() -> ScenarioConfig {
        let mut config = default_scenario();
        config.simulation.mc_samples = 200;
        config
    }

    #[test]
    fn single_run_is_feasible() {
        let config = quick_config();
        let records = run_scenario(&config, &Scheme::ALL, 3);
        assert_eq!(records.len(), 4);
        let sca = &records[0];
        assert_eq!(sca.scheme, Scheme::ScaNoma);
        assert!(sca.error.is_none() && sca.converged, "{sca:?}");
        assert_eq!(sca.violation, None);
        let equal = &records[1];
        assert!(sca.sum_rate_approx >= equal.sum_rate_approx);
    }

    #[test]
    fn sweep_order_and_determinism() {
        let config = quick_config();
        let spec = SweepSpec {
            schemes: vec![Scheme::EqualPowerNoma, Scheme::OmaEqual],
            repetitions: 2,
            ..SweepSpec::new(SweepAxis::PMax, vec![25.0, 75.0])
        };
        let a = run_sweep(&spec, &config, 11).unwrap();
        let b = run_sweep(&spec, &config, 11).unwrap();
        assert_eq!(a.len(), 8);
        let keys: Vec<(f64, usize)> = a.iter().map(|r| (r.axis_value.unwrap(), r.repetition)).collect();
        assert!(keys.windows(2).all(|w| w[0] <= w[1]), "{keys:?}");
        assert_eq!(a[0].scheme, Scheme::EqualPowerNoma);
        assert_eq!(a[1].scheme, Scheme::OmaEqual);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.sum_rate_mc, y.sum_rate_mc);
            assert_eq!(x.power, y.power);
        }
        // Repetitions reseed Monte Carlo only.
        assert_ne!(a[0].sum_rate_mc, a[2].sum_rate_mc);
        assert_eq!(a[0].sum_rate_approx, a[2].sum_rate_approx);
    }

    #[test]
    fn failures_are_recorded() {
        let config = quick_config();
        let spec = SweepSpec { schemes: vec![Scheme::ScaNoma], ..SweepSpec::new(SweepAxis::QosFloor, vec![0.5, 50.0]) };
        let records = run_sweep(&spec, &config, 0).unwrap();
        assert!(records[0].error.is_none());
        assert!(records[1].error.as_deref().is_some_and(|e| e.contains("QoS")), "{:?}", records[1].error);
    }

    #[test]
    fn check_flags_overspent_budget() {
        let config = quick_config();
        let (topo, env, c) = config.parts();
        let net = Network::new(topo, &env).unwrap();
        let p = PowerAllocation::uniform(&net.topology, 30.0);
        assert!(check_allocation(&net, &c, &p, Scheme::EqualPowerNoma, 0.5).unwrap().is_some());
    }

    #[test]
    fn monotone_tolerance() {
        assert!(is_monotone(&[1.0, 2.0, 2.0 - 1e-12], 1e-9));
        assert!(!is_monotone(&[1.0, 2.0, 1.9], 1e-9));
    }
}
