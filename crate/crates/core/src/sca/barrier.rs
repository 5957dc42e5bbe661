//! Log-barrier interior-point method for small dense concave programs
//!
//! ```text
//! maximize phi(x)  subject to  c_i(x) > 0,
//! ```
//!
//! with `phi` and every `c_i` concave. Each stage maximizes
//! `tau * phi(x) + sum_i ln c_i(x)` by damped Newton steps; `tau` grows
//! geometrically. Constraints flagged `soft` may be violated at the start
//! point and are handled by a phase-I problem that maximizes a common margin.

use nalgebra::{DMatrix, DVector};

use crate::error::{ConstraintId, Error, Result};

#[derive(Debug, Clone)]
pub struct ConstraintEval {
    pub id: ConstraintId,
    pub soft: bool,
    pub value: f64,
    pub grad: Vec<(usize, f64)>,
    /// Lower or upper triangle entries; symmetric entries are mirrored.
    pub hess: Vec<(usize, usize, f64)>,
}

impl ConstraintEval {
    pub fn linear(id: ConstraintId, value: f64, grad: Vec<(usize, f64)>) -> Self {
        ConstraintEval { id, soft: false, value, grad, hess: Vec::new() }
    }
}

pub struct ObjectiveEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

pub trait BarrierProblem {
    fn dim(&self) -> usize;

    /// Concave objective. Derivatives are only needed when `derivs` is set.
    fn objective(&self, x: &[f64], derivs: bool) -> Result<ObjectiveEval>;

    /// Appends every constraint; gradient and Hessian entries only when
    /// `derivs` is set.
    fn constraints(&self, x: &[f64], derivs: bool, out: &mut Vec<ConstraintEval>);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSettings {
    pub tau_start: f64,
    pub tau_end: f64,
    pub tau_factor: f64,
    pub newton_tol: f64,
    pub max_newton_per_stage: usize,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        // barrier weight 1/tau goes from 1 down to 1e-9
        BarrierSettings { tau_start: 1.0, tau_end: 1e9, tau_factor: 10.0, newton_tol: 1e-10, max_newton_per_stage: 200 }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub newton_steps: usize,
    /// Newton decrement at the last stage, `sqrt(g^T H^-1 g) / tau`.
    pub stationarity: f64,
    /// Smallest constraint value at the returned point.
    pub min_slack: f64,
}

struct Model {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

fn strictly_inside(cons: &[ConstraintEval]) -> bool {
    cons.iter().all(|c| c.value > 0.0 && c.value.is_finite())
}

/// Value of `tau * phi + sum ln c`, or `None` outside the domain.
fn barrier_value<P: BarrierProblem + ?Sized>(p: &P, x: &[f64], tau: f64, buf: &mut Vec<ConstraintEval>) -> Result<Option<f64>> {
    buf.clear();
    p.constraints(x, false, buf);
    if !strictly_inside(buf) {
        return Ok(None);
    }
    let obj = p.objective(x, false)?;
    if !obj.value.is_finite() {
        return Ok(None);
    }
    Ok(Some(tau * obj.value + buf.iter().map(|c| c.value.ln()).sum::<f64>()))
}

fn barrier_model<P: BarrierProblem + ?Sized>(p: &P, x: &[f64], tau: f64, buf: &mut Vec<ConstraintEval>) -> Result<Model> {
    let n = p.dim();
    let obj = p.objective(x, true)?;
    let mut grad = obj.grad * tau;
    let mut hess = obj.hess * tau;
    let mut value = tau * obj.value;
    buf.clear();
    p.constraints(x, true, buf);
    for c in buf.iter() {
        let inv = 1.0 / c.value;
        value += c.value.ln();
        for &(i, g) in &c.grad {
            grad[i] += g * inv;
        }
        for &(i, gi) in &c.grad {
            for &(j, gj) in &c.grad {
                hess[(i, j)] -= gi * gj * inv * inv;
            }
        }
        for &(i, j, h) in &c.hess {
            hess[(i, j)] += h * inv;
            if i != j {
                hess[(j, i)] += h * inv;
            }
        }
    }
    debug_assert_eq!(grad.len(), n);
    Ok(Model { value, grad, hess })
}

/// Solves `(-H) d = g` with a Cholesky factorization, regularizing if the
/// negated Hessian is not numerically positive definite.
fn newton_direction(model: &Model) -> Option<DVector<f64>> {
    let neg = -&model.hess;
    let scale = neg.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
    let mut shift = 0.0;
    for _ in 0..30 {
        let mut m = neg.clone();
        if shift > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += shift;
            }
        }
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(&model.grad);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        shift = if shift == 0.0 { scale * 1e-12 } else { shift * 10.0 };
    }
    None
}

struct StageResult {
    steps: usize,
    decrement: f64,
}

fn newton_stage<P: BarrierProblem + ?Sized>(
    p: &P,
    x: &mut Vec<f64>,
    tau: f64,
    settings: &BarrierSettings,
    stop: &dyn Fn(&[f64]) -> bool,
) -> Result<StageResult> {
    let mut buf = Vec::new();
    let mut decrement = f64::INFINITY;
    for step in 0..settings.max_newton_per_stage {
        let model = barrier_model(p, x, tau, &mut buf)?;
        let dir = newton_direction(&model)
            .ok_or_else(|| Error::Numerical("barrier Hessian could not be factorized".into()))?;
        let lambda_sq = model.grad.dot(&dir);
        decrement = lambda_sq.max(0.0).sqrt();
        if lambda_sq / 2.0 <= settings.newton_tol {
            return Ok(StageResult { steps: step, decrement });
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        let mut trial = x.clone();
        for _ in 0..80 {
            for (t, (xi, di)) in trial.iter_mut().zip(x.iter().zip(dir.iter())) {
                *t = xi + alpha * di;
            }
            if let Some(v) = barrier_value(p, &trial, tau, &mut buf)? {
                if v >= model.value + 0.25 * alpha * lambda_sq {
                    accepted = true;
                    break;
                }
                // Near the optimum the Armijo test drowns in rounding of the
                // large tau * phi term; accept any feasible non-worsening step.
                if lambda_sq < 1e-6 && v >= model.value - 1e-12 * model.value.abs() {
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Ok(StageResult { steps: step, decrement });
        }
        std::mem::swap(x, &mut trial);
        if stop(x) {
            return Ok(StageResult { steps: step + 1, decrement });
        }
    }
    Ok(StageResult { steps: settings.max_newton_per_stage, decrement })
}

/// Maximizes `phi` from a strictly feasible start point.
pub fn maximize<P: BarrierProblem + ?Sized>(p: &P, x0: &[f64], settings: &BarrierSettings) -> Result<BarrierOutcome> {
    let mut x = x0.to_vec();
    let mut buf = Vec::new();
    p.constraints(&x, false, &mut buf);
    if !strictly_inside(&buf) {
        return Err(Error::Numerical("barrier start point is not strictly feasible".into()));
    }
    let mut tau = settings.tau_start;
    let mut steps = 0;
    let mut decrement;
    loop {
        let stage = newton_stage(p, &mut x, tau, settings, &|_| false)?;
        steps += stage.steps;
        decrement = stage.decrement / tau;
        if tau >= settings.tau_end {
            break;
        }
        tau = (tau * settings.tau_factor).min(settings.tau_end);
    }
    buf.clear();
    p.constraints(&x, false, &mut buf);
    let min_slack = buf.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
    let objective = p.objective(&x, false)?.value;
    Ok(BarrierOutcome { x, objective, newton_steps: steps, stationarity: decrement, min_slack })
}

/// Phase-I problem: maximize `-s` subject to `c_i(x) + s > 0` for soft
/// constraints and `c_i(x) > 0` for hard ones.
struct PhaseOne<'a, P: ?Sized> {
    inner: &'a P,
}

impl<P: BarrierProblem + ?Sized> BarrierProblem for PhaseOne<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn objective(&self, x: &[f64], derivs: bool) -> Result<ObjectiveEval> {
        let n = self.dim();
        let mut grad = DVector::zeros(if derivs { n } else { 0 });
        if derivs {
            grad[n - 1] = -1.0;
        }
        let hess = DMatrix::zeros(if derivs { n } else { 0 }, if derivs { n } else { 0 });
        Ok(ObjectiveEval { value: -x[n - 1], grad, hess })
    }

    fn constraints(&self, x: &[f64], derivs: bool, out: &mut Vec<ConstraintEval>) {
        let s_idx = self.inner.dim();
        let s = x[s_idx];
        let start = out.len();
        self.inner.constraints(&x[..s_idx], derivs, out);
        for c in &mut out[start..] {
            if c.soft {
                c.value += s;
                if derivs {
                    c.grad.push((s_idx, 1.0));
                }
            }
        }
    }
}

/// Margin at which phase I stops early.
const PHASE_ONE_MARGIN: f64 = 1e-3;

/// Result of a phase-I search.
#[derive(Debug, Clone)]
pub struct PhaseOneOutcome {
    /// Best point found; strictly satisfies every hard constraint.
    pub x: Vec<f64>,
    /// Most violated (or tightest) constraint at `x` and its value.
    pub worst: ConstraintId,
    pub worst_value: f64,
}

impl PhaseOneOutcome {
    pub fn is_interior(&self) -> bool {
        self.worst_value > 0.0
    }
}

/// Maximizes the common margin of the soft constraints from `x0`, which must
/// strictly satisfy the hard ones. Stops early once every soft constraint
/// holds with a small positive margin.
pub fn phase_one<P: BarrierProblem + ?Sized>(p: &P, x0: &[f64], settings: &BarrierSettings) -> Result<PhaseOneOutcome> {
    let mut buf = Vec::new();
    p.constraints(x0, false, &mut buf);
    if buf.iter().any(|c| !c.soft && !(c.value > 0.0)) {
        return Err(Error::Numerical("phase-I start violates a hard constraint".into()));
    }
    let worst_at = |buf: &[ConstraintEval]| {
        buf.iter()
            .map(|c| (c.id, if c.value.is_nan() { f64::NEG_INFINITY } else { c.value }))
            .fold((buf[0].id, f64::INFINITY), |acc, (id, v)| if v < acc.1 { (id, v) } else { acc })
    };
    if strictly_inside(&buf) {
        let (worst, worst_value) = worst_at(&buf);
        return Ok(PhaseOneOutcome { x: x0.to_vec(), worst, worst_value });
    }
    let soft_min = buf.iter().filter(|c| c.soft).map(|c| c.value).fold(f64::INFINITY, f64::min);
    if !soft_min.is_finite() {
        return Err(Error::Numerical("phase-I start is outside a soft constraint's domain".into()));
    }
    let phase = PhaseOne { inner: p };
    let mut x = x0.to_vec();
    x.push(1.0 - soft_min);
    let inner_dim = p.dim();
    let done = |x: &[f64]| {
        let mut b = Vec::new();
        p.constraints(&x[..inner_dim], false, &mut b);
        x[inner_dim] < -PHASE_ONE_MARGIN && strictly_inside(&b)
    };
    let mut tau = settings.tau_start;
    loop {
        newton_stage(&phase, &mut x, tau, settings, &done)?;
        if done(&x) || tau >= settings.tau_end {
            break;
        }
        tau = (tau * settings.tau_factor).min(settings.tau_end);
    }
    x.truncate(inner_dim);
    buf.clear();
    p.constraints(&x, false, &mut buf);
    let (worst, worst_value) = worst_at(&buf);
    Ok(PhaseOneOutcome { x, worst, worst_value })
}

/// Finds a point strictly satisfying every constraint, starting from `x0`
/// which must strictly satisfy the hard ones. On failure reports the
/// constraint with the largest remaining shortfall.
pub fn find_interior<P: BarrierProblem + ?Sized>(p: &P, x0: &[f64], settings: &BarrierSettings) -> Result<Vec<f64>> {
    let out = phase_one(p, x0, settings)?;
    if out.is_interior() {
        Ok(out.x)
    } else {
        Err(Error::Infeasible { constraint: out.worst, shortfall: -out.worst_value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// maximize ln(1 + x0) + ln(1 + x1) s.t. x0 + x1 <= 2, x >= 0 (soft: x1 >= 0.5)
    struct WaterFill {
        soft_floor: f64,
    }

    impl BarrierProblem for WaterFill {
        fn dim(&self) -> usize {
            2
        }
        fn objective(&self, x: &[f64], derivs: bool) -> Result<ObjectiveEval> {
            let value = x[0].ln_1p() + x[1].ln_1p();
            let (grad, hess) = if derivs {
                (
                    DVector::from_vec(vec![1.0 / (1.0 + x[0]), 1.0 / (1.0 + x[1])]),
                    DMatrix::from_diagonal(&DVector::from_vec(vec![
                        -1.0 / (1.0 + x[0]).powi(2),
                        -1.0 / (1.0 + x[1]).powi(2),
                    ])),
                )
            } else {
                (DVector::zeros(0), DMatrix::zeros(0, 0))
            };
            Ok(ObjectiveEval { value, grad, hess })
        }
        fn constraints(&self, x: &[f64], _derivs: bool, out: &mut Vec<ConstraintEval>) {
            let id = ConstraintId::ClusterBudget { cluster: 0 };
            out.push(ConstraintEval::linear(id, x[0], vec![(0, 1.0)]));
            out.push(ConstraintEval::linear(id, x[1], vec![(1, 1.0)]));
            out.push(ConstraintEval::linear(id, 2.0 - x[0] - x[1], vec![(0, -1.0), (1, -1.0)]));
            let mut soft = ConstraintEval::linear(ConstraintId::QosFloor { cluster: 0 }, x[1] - self.soft_floor, vec![(1, 1.0)]);
            soft.soft = true;
            out.push(soft);
        }
    }

    #[test]
    fn symmetric_water_filling() {
        let p = WaterFill { soft_floor: 0.0 };
        let out = maximize(&p, &[0.1, 0.2], &BarrierSettings::default()).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-6, "{:?}", out.x);
        assert!((out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn phase_one_recovers_feasibility() {
        let p = WaterFill { soft_floor: 1.5 };
        let x = find_interior(&p, &[1.0, 0.5], &BarrierSettings::default()).unwrap();
        assert!(x[1] > 1.5 && x[0] > 0.0 && x[0] + x[1] < 2.0, "{x:?}");
        let out = maximize(&p, &x, &BarrierSettings::default()).unwrap();
        assert!((out.x[1] - 1.5).abs() < 1e-6, "{:?}", out.x);
    }

    #[test]
    fn phase_one_reports_infeasibility() {
        let p = WaterFill { soft_floor: 2.5 };
        match find_interior(&p, &[1.0, 0.5], &BarrierSettings::default()) {
            Err(Error::Infeasible { constraint, shortfall }) => {
                assert_eq!(constraint, ConstraintId::QosFloor { cluster: 0 });
                assert!(shortfall > 0.4, "{shortfall}");
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }
}
