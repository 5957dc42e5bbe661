//! Successive convex approximation of the sum-rate maximization.
//!
//! Each outer iteration linearizes the nonconvex parts around the previous
//! iterate and solves the resulting convex subproblem; the approximate sum
//! rate is nondecreasing across iterations because every linearization is an
//! inner approximation that is tight at its expansion point (up to constant
//! offsets that do not move the subproblem's optimum).

pub mod barrier;
pub mod init;
pub mod linearize;
pub mod problem;
pub mod subproblem;

use serde::{Deserialize, Serialize};

use crate::allocation::PowerAllocation;
use crate::channel::dbm_to_watts;
use crate::error::{ConstraintId, Error, Result};
use crate::network::Network;
use crate::rates::AuxVariables;

pub use barrier::BarrierSettings;
pub use init::{initial_power, initialize};
pub use linearize::{linearize_sigma, linearized_constraints, CouplingForm, LinearizationPoint, Surrogate};
pub use problem::{AccessScheme, Problem};
pub use subproblem::{restoration_step, solve_subproblem, SubproblemSolution};

/// Power, leakage and QoS limits of the allocation problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSet {
    /// Per-cluster power budget (W).
    pub p_max: f64,
    /// Per-TBS transmit cap (W).
    pub p_tbs_max: f64,
    /// Per-UAV transmit cap (W).
    pub p_uav_max: f64,
    /// Tolerable interference at each satellite user (W).
    pub leakage_cap: f64,
    /// Rate floor of each cluster's far user (bits/s/Hz).
    pub qos_floor: Vec<f64>,
    /// Relative-change stopping threshold of the outer loop.
    pub epsilon: f64,
    /// Budget scale-down step of the initialization.
    pub init_step: f64,
}

impl ConstraintSet {
    pub const DEFAULT_P_MAX_W: f64 = 50.0;
    pub const DEFAULT_P_TBS_MAX_W: f64 = 40.0;
    pub const DEFAULT_P_UAV_MAX_W: f64 = 30.0;
    pub const DEFAULT_LEAKAGE_CAP_DBM: f64 = -100.0;
    pub const DEFAULT_QOS_FLOOR: f64 = 0.5;
    pub const DEFAULT_EPSILON: f64 = 1e-3;

    pub fn with_defaults(num_clusters: usize) -> Self {
        ConstraintSet {
            p_max: Self::DEFAULT_P_MAX_W,
            p_tbs_max: Self::DEFAULT_P_TBS_MAX_W,
            p_uav_max: Self::DEFAULT_P_UAV_MAX_W,
            leakage_cap: dbm_to_watts(Self::DEFAULT_LEAKAGE_CAP_DBM),
            qos_floor: vec![Self::DEFAULT_QOS_FLOOR; num_clusters],
            epsilon: Self::DEFAULT_EPSILON,
            init_step: Self::DEFAULT_EPSILON,
        }
    }

    pub fn validate(&self, num_clusters: usize) -> Result<()> {
        let positive = [
            ("p_max", self.p_max),
            ("p_tbs_max", self.p_tbs_max),
            ("p_uav_max", self.p_uav_max),
            ("leakage_cap", self.leakage_cap),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Constraints(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("epsilon", self.epsilon), ("init_step", self.init_step)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Constraints(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.qos_floor.len() != num_clusters {
            return Err(Error::Constraints(format!(
                "qos_floor has {} entries for {num_clusters} clusters",
                self.qos_floor.len()
            )));
        }
        if let Some(r) = self.qos_floor.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::Constraints(format!("qos_floor entries must be non-negative, got {r}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    pub max_iterations: usize,
    pub coupling: CouplingForm,
    /// Cap on restoration steps when the start point misses a QoS floor.
    pub max_restorations: usize,
    pub barrier: BarrierSettings,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            max_iterations: 100,
            coupling: CouplingForm::Tangent,
            max_restorations: 100,
            barrier: BarrierSettings::default(),
        }
    }
}

/// Largest QoS shortfall `floor - g` over the chains, with its cluster.
fn qos_shortfall(problem: &Problem, power: &[f64]) -> Result<Option<(usize, f64)>> {
    let mut worst: Option<(usize, f64)> = None;
    for chain in &problem.chains {
        let rate = crate::rates::approx_rate_from_snr(&chain.term.snr(power), chain.term.antennas)?;
        let short = chain.floor - rate;
        if worst.map_or(true, |(_, w)| short > w) {
            worst = Some((chain.cluster, short));
        }
    }
    Ok(worst)
}

/// Moves the start point until every QoS floor holds strictly, by repeated
/// phase-I steps on the linearized constraints. Stops with an infeasibility
/// report once the true shortfall no longer shrinks.
fn restore_feasibility(
    net: &Network,
    problem: &Problem,
    point: &mut LinearizationPoint,
    options: &OptimizerOptions,
) -> Result<usize> {
    let mut restorations = 0;
    while let Some((k, short)) = qos_shortfall(problem, &point.power_prev.to_flat())? {
        if short < 0.0 {
            break;
        }
        if restorations >= options.max_restorations {
            return Err(Error::Infeasible { constraint: ConstraintId::QosFloor { cluster: k }, shortfall: short });
        }
        let next = match restoration_step(net, problem, point, options) {
            Ok(next) => next,
            Err(Error::Infeasible { .. }) => {
                return Err(Error::Infeasible { constraint: ConstraintId::QosFloor { cluster: k }, shortfall: short })
            }
            Err(e) => return Err(e),
        };
        restorations += 1;
        let after = qos_shortfall(problem, &next.power_prev.to_flat())?.map_or(f64::NEG_INFINITY, |(_, s)| s);
        if after >= 0.0 && after > short - 1e-6 {
            return Err(Error::Infeasible { constraint: ConstraintId::QosFloor { cluster: k }, shortfall: after });
        }
        *point = next;
    }
    Ok(restorations)
}

/// One outer iteration of the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Surrogate objective of the subproblem solved in this iteration
    /// (`NaN` for the starting point).
    pub surrogate: f64,
    /// Weighted approximate sum rate at the iterate.
    pub sum_rate: f64,
    /// Largest normalized violation of the nonlinear constraints; non-positive
    /// means feasible.
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub scheme: AccessScheme,
    pub power: PowerAllocation,
    pub aux: AuxVariables,
    /// `w = ln v*` per user, `[k][m]`.
    pub w: Vec<[f64; 2]>,
    /// Weighted approximate sum rate after each iteration, starting with the
    /// initial point.
    pub objective_trace: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    pub iteration: usize,
    pub converged: bool,
    /// Feasibility-restoration steps taken before the first iteration.
    pub restorations: usize,
}

impl OptimizerState {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Rejects clusters whose receivers have fewer antennas than transmitters.
fn check_preconditions(net: &Network) -> Result<()> {
    net.topology.check_antenna_condition()
}

fn w_of(problem: &Problem, power: &[f64]) -> Result<Vec<[f64; 2]>> {
    let mut w = vec![[0.0; 2]; problem.num_clusters()];
    for term in &problem.terms {
        let v = crate::rates::solve_fixed_point(&term.snr(power), term.antennas)?.v_star;
        w[term.cluster][term.user] = v.ln();
    }
    Ok(w)
}

/// Runs the NOMA optimizer with default options.
pub fn run(net: &Network, constraints: &ConstraintSet) -> Result<OptimizerState> {
    run_with(net, constraints, AccessScheme::Noma, &OptimizerOptions::default())
}

/// Runs the optimizer for an access scheme from the equal-split start.
pub fn run_with(
    net: &Network,
    constraints: &ConstraintSet,
    scheme: AccessScheme,
    options: &OptimizerOptions,
) -> Result<OptimizerState> {
    check_preconditions(net)?;
    let problem = Problem::new(net, constraints, scheme)?;
    let (power, _) = initial_power(net, constraints)?;
    let aux = init::aux_for_problem(net, &problem, &power)?;
    let mut point = LinearizationPoint::new(power, aux);
    point.repair_interior();
    let restorations = restore_feasibility(net, &problem, &mut point, options)?;

    let flat = point.power_prev.to_flat();
    let g0 = problem.objective(&flat)?;
    let mut state = OptimizerState {
        scheme,
        power: point.power_prev.clone(),
        aux: point.aux(),
        w: w_of(&problem, &flat)?,
        objective_trace: vec![g0],
        trace: vec![TraceRecord {
            iteration: 0,
            surrogate: f64::NAN,
            sum_rate: g0,
            max_residual: problem.max_violation(&point.power_prev)?,
        }],
        iteration: 0,
        converged: false,
        restorations,
    };

    for s in 1..=options.max_iterations {
        let sol = solve_subproblem(&problem, &point, options)?;
        let flat = sol.power.to_flat();
        let g = problem.objective(&flat)?;
        let prev = state.objective();
        state.trace.push(TraceRecord {
            iteration: s,
            surrogate: sol.surrogate,
            sum_rate: g,
            max_residual: problem.max_violation(&sol.power)?,
        });
        state.objective_trace.push(g);
        state.iteration = s;
        state.power = sol.power.clone();
        state.aux = sol.aux.clone();
        state.w = sol.w;

        point = LinearizationPoint::new(sol.power, sol.aux);
        point.repair_interior();
        if (g - prev).abs() <= constraints.epsilon * prev.abs() {
            state.converged = true;
            return Ok(state);
        }
    }
    Err(Error::NotConverged(Box::new(state)))
}
