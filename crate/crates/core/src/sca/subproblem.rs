//! One convex subproblem: maximize the surrogate over `(P, z, t)` subject to
//! the linearized constraints.
//!
//! The inner minimization over `w` has a closed-form solution (the fixed
//! point), and the surrogate is convex in `w` and concave in `P`, so the
//! reduced function `P -> min_w surrogate(P, w)` is concave. It is maximized
//! directly with a barrier method whose Hessian is the Schur complement of the
//! joint `(P, w)` Hessian.

use nalgebra::{DMatrix, DVector};

use crate::allocation::PowerAllocation;
use crate::error::Result;
use crate::network::Network;
use crate::rates::AuxVariables;
use crate::sca::init::aux_for_problem;
use crate::sca::barrier::{self, BarrierProblem, ConstraintEval, ObjectiveEval};
use crate::sca::linearize::{chain_linearizations, push_constraints, ChainLinearization, LinearizationPoint, Surrogate};
use crate::sca::problem::Problem;
use crate::sca::OptimizerOptions;

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub power: PowerAllocation,
    pub aux: AuxVariables,
    /// `w = ln v*` for each user, indexed `[k][m]`.
    pub w: Vec<[f64; 2]>,
    /// Surrogate objective at the solution.
    pub surrogate: f64,
    pub newton_steps: usize,
}

struct Linearized<'a> {
    problem: &'a Problem,
    surrogate: Surrogate<'a>,
    chains: Vec<ChainLinearization>,
}

impl BarrierProblem for Linearized<'_> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn objective(&self, x: &[f64], derivs: bool) -> Result<ObjectiveEval> {
        let np = self.problem.num_power();
        let (value, _, g, h) = self.surrogate.reduced(&x[..np], derivs)?;
        if !derivs {
            return Ok(ObjectiveEval { value, grad: DVector::zeros(0), hess: DMatrix::zeros(0, 0) });
        }
        let dim = self.dim();
        let mut grad = DVector::zeros(dim);
        grad.rows_mut(0, np).copy_from(&g);
        let mut hess = DMatrix::zeros(dim, dim);
        hess.view_mut((0, 0), (np, np)).copy_from(&h);
        Ok(ObjectiveEval { value, grad, hess })
    }

    fn constraints(&self, x: &[f64], derivs: bool, out: &mut Vec<ConstraintEval>) {
        push_constraints(self.problem, &self.chains, x, derivs, &mut |c| out.push(c));
    }
}

impl<'a> Linearized<'a> {
    fn new(problem: &'a Problem, point: &LinearizationPoint, options: &OptimizerOptions) -> Self {
        Linearized {
            problem,
            surrogate: Surrogate::new(problem, &point.power_prev.to_flat()),
            chains: chain_linearizations(problem, point, options.coupling),
        }
    }
}

/// The expansion point as a flat vector, pulled slightly inside the power
/// box when it sits on a cap.
fn start_vector(sub: &Linearized<'_>, point: &LinearizationPoint) -> Vec<f64> {
    const SHRINK: f64 = 1e-6;
    let np = sub.problem.num_power();
    let mut x0 = pack(sub.problem, point);
    let mut cons = Vec::new();
    sub.constraints(&x0, false, &mut cons);
    if cons.iter().any(|c| !c.soft && !(c.value > 0.0)) {
        let floor = 1e-9 * sub.problem.budgets.iter().map(|b| b.cap).fold(f64::INFINITY, f64::min);
        for p in &mut x0[..np] {
            *p = (*p * (1.0 - SHRINK)).max(floor);
        }
    }
    x0
}

/// One feasibility-restoration step: maximizes the common margin of the
/// linearized QoS constraints around `point` and returns the resulting power
/// with its auxiliaries re-derived at equality.
pub fn restoration_step(
    net: &Network,
    problem: &Problem,
    point: &LinearizationPoint,
    options: &OptimizerOptions,
) -> Result<LinearizationPoint> {
    let sub = Linearized::new(problem, point, options);
    let x0 = start_vector(&sub, point);
    let out = barrier::phase_one(&sub, &x0, &options.barrier)?;
    let power = PowerAllocation::from_flat(&problem.layout, &out.x[..problem.num_power()]);
    let aux = aux_for_problem(net, problem, &power)?;
    let mut next = LinearizationPoint::new(power, aux);
    next.repair_interior();
    Ok(next)
}

/// Packs `(P, z, t)` of the chains into the flat variable vector.
pub(crate) fn pack(problem: &Problem, point: &LinearizationPoint) -> Vec<f64> {
    let mut x = point.power_prev.to_flat();
    for chain in &problem.chains {
        x.push(point.z_prev[chain.cluster]);
    }
    for chain in &problem.chains {
        x.extend_from_slice(&point.t_prev[chain.cluster]);
    }
    x
}

/// Solves the linearized subproblem around `point`. The previous power is
/// pulled slightly inside the box so the barrier is finite; the QoS chain
/// constraints are restored by a phase-I search when the expansion point
/// violates them.
pub fn solve_subproblem(problem: &Problem, point: &LinearizationPoint, options: &OptimizerOptions) -> Result<SubproblemSolution> {
    let np = problem.num_power();
    let sub = Linearized::new(problem, point, options);
    let x0 = start_vector(&sub, point);
    let start = barrier::find_interior(&sub, &x0, &options.barrier)?;
    let outcome = barrier::maximize(&sub, &start, &options.barrier)?;

    let x = outcome.x;
    let power = PowerAllocation::from_flat(&problem.layout, &x[..np]);
    let (surrogate, ws, _, _) = sub.surrogate.reduced(&x[..np], false)?;
    let k_total = problem.num_clusters();
    let mut w = vec![[0.0; 2]; k_total];
    for (term, &wi) in problem.terms.iter().zip(&ws) {
        w[term.cluster][term.user] = wi;
    }
    let mut aux = AuxVariables { z: point.z_prev.clone(), t: point.t_prev.clone() };
    for (c, chain) in problem.chains.iter().enumerate() {
        aux.z[chain.cluster] = x[problem.z_index(c)];
        aux.t[chain.cluster] = (0..chain.term.num_nodes()).map(|n| x[problem.t_index(c, n)]).collect();
    }
    Ok(SubproblemSolution { power, aux, w, surrogate, newton_steps: outcome.newton_steps })
}
