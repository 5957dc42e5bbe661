//! Linearization of the nonconvex pieces around the previous iterate.
//!
//! The rate of one user is written as a difference of two concave functions,
//!
//! ```text
//! G1(P, w) = log2(e) [ sum_n ln(sigma(P) + M l_n P_n e^-w) + M w - M (1 - e^-w) ]
//! G2(P)    = N log2 sigma(P)
//! ```
//!
//! with `min_w G1 - G2 = g` attained at `w = ln v*`. The surrogate replaces
//! `G2` by its affine upper bound around `P0`. The QoS chain uses the
//! auxiliary variables `z` and `t` and three linearized constraints.

use std::f64::consts::LOG2_E;

use nalgebra::{DMatrix, DVector};

use crate::allocation::PowerAllocation;
use crate::error::{ConstraintId, Result};
use crate::network::Network;
use crate::rates::{solve_fixed_point, AuxVariables};
use crate::sca::problem::{AffineForm, Problem, RateTerm};

/// Expansion point of the convex subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationPoint {
    pub power_prev: PowerAllocation,
    /// `z_k` per cluster.
    pub z_prev: Vec<f64>,
    /// `t_{k,n}` per cluster and transmitter.
    pub t_prev: Vec<Vec<f64>>,
}

impl LinearizationPoint {
    pub fn new(power_prev: PowerAllocation, aux: AuxVariables) -> Self {
        LinearizationPoint { power_prev, z_prev: aux.z, t_prev: aux.t }
    }

    pub fn aux(&self) -> AuxVariables {
        AuxVariables { z: self.z_prev.clone(), t: self.t_prev.clone() }
    }

    /// Nudges the auxiliaries into the open interior: `z > 1`, `0 < t < 1`.
    pub fn repair_interior(&mut self) {
        const NUDGE: f64 = 1e-9;
        for z in &mut self.z_prev {
            *z = z.max(1.0 + NUDGE);
        }
        for t in self.t_prev.iter_mut().flatten() {
            *t = t.clamp(NUDGE, 1.0 - NUDGE);
        }
    }
}

/// Linearized interference-plus-noise `sum l (P - P0) + sigma^2` of user `m`
/// in cluster `k`, as printed for the surrogate. Its value at `P0` is the
/// bare noise floor.
pub fn linearize_sigma(net: &Network, point: &LinearizationPoint, k: usize, m: usize) -> AffineForm {
    let layout = crate::allocation::PowerLayout::new(&net.topology);
    let p0 = point.power_prev.to_flat();
    let mut coeffs = Vec::new();
    for i in (0..net.num_clusters()).filter(|&i| i != k) {
        for n in 0..net.num_nodes(i) {
            let l = net.gains.user(k, m, i, n);
            coeffs.push((layout.index(i, 0, n), l));
            coeffs.push((layout.index(i, 1, n), l));
        }
    }
    if m == 1 {
        for n in 0..net.num_nodes(k) {
            coeffs.push((layout.index(k, 0, n), net.gains.user(k, 1, k, n)));
        }
    }
    shifted_form(&AffineForm { constant: net.noise_w, coeffs }, &p0, net.noise_w)
}

/// `noise(P) - noise(P0) + floor` as an affine form.
fn shifted_form(noise: &AffineForm, p0: &[f64], floor: f64) -> AffineForm {
    let at_p0: f64 = noise.coeffs.iter().map(|&(i, c)| c * p0[i]).sum();
    AffineForm { constant: floor - at_p0, coeffs: noise.coeffs.clone() }
}

/// Value, gradient and Hessian of one user's reduced concave part
/// `min_w G1(P, w)` in bits, with derivatives over the flat power vector.
pub(crate) struct ReducedG1 {
    pub value: f64,
    pub w: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// `G1(P, w)` at an arbitrary `w`, in bits.
pub fn g1_value(term: &RateTerm, power: &[f64], w: f64) -> f64 {
    let m = term.antennas as f64;
    let sigma = term.noise.eval(power);
    let u = (-w).exp();
    let sum: f64 = term.signal.iter().map(|&(i, l)| (sigma + m * l * power[i] * u).ln()).sum();
    LOG2_E * (sum + m * w - m * (1.0 - u))
}

pub(crate) fn reduced_g1(term: &RateTerm, power: &[f64], derivs: bool) -> Result<ReducedG1> {
    let np = power.len();
    let m = term.antennas as f64;
    let sigma = term.noise.eval(power);
    let snr = term.snr(power);
    let v = solve_fixed_point(&snr, term.antennas)?.v_star;
    let w = v.ln();
    let u = 1.0 / v;
    let value = g1_value(term, power, w);
    if !derivs {
        return Ok(ReducedG1 { value, w, grad: DVector::zeros(0), hess: DMatrix::zeros(0, 0) });
    }
    let c = DVector::from_vec(term.noise.dense_coeffs(np));
    let mut grad = DVector::zeros(np);
    let mut g_pp = DMatrix::zeros(np, np);
    let mut g_pw = DVector::zeros(np);
    let mut g_ww = m * u;
    for &(i, l) in &term.signal {
        let a = m * l * power[i];
        let h = sigma + a * u;
        let mut r = c.clone();
        r[i] += m * l * u;
        grad.axpy(1.0 / h, &r, 1.0);
        g_pp.ger(-1.0 / (h * h), &r, &r, 1.0);
        g_pw.axpy(a * u / (h * h), &c, 1.0);
        g_pw[i] -= m * l * u * sigma / (h * h);
        g_ww += a * u * sigma / (h * h);
    }
    g_pp.ger(-1.0 / g_ww, &g_pw, &g_pw, 1.0);
    Ok(ReducedG1 { value, w, grad: grad * LOG2_E, hess: g_pp * LOG2_E })
}

/// The printed affine replacement of `G2 = N log2 sigma(P)` around `P0`:
/// `G2(P0) + N log2(e) sigma_lin(P) / sigma(P0)`, which exceeds the tangent
/// by the constant `N log2(e) sigma^2 / sigma(P0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedG2 {
    pub constant: f64,
    pub coeffs: Vec<(usize, f64)>,
}

impl LinearizedG2 {
    pub fn new(term: &RateTerm, p0: &[f64], noise_floor: f64) -> Self {
        let n = term.num_nodes() as f64;
        let sigma0 = term.noise.eval(p0);
        let lin = shifted_form(&term.noise, p0, noise_floor);
        let scale = n * LOG2_E / sigma0;
        LinearizedG2 {
            constant: n * sigma0.log2() + scale * lin.constant,
            coeffs: lin.coeffs.iter().map(|&(i, c)| (i, scale * c)).collect(),
        }
    }

    pub fn eval(&self, power: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|&(i, c)| c * power[i]).sum::<f64>()
    }
}

/// Surrogate objective `sum weight (G1 - G2_lin)` around a fixed `P0`.
#[derive(Debug, Clone)]
pub struct Surrogate<'a> {
    pub problem: &'a Problem,
    pub g2: Vec<LinearizedG2>,
}

impl<'a> Surrogate<'a> {
    pub fn new(problem: &'a Problem, p0: &[f64]) -> Self {
        let g2 = problem.terms.iter().map(|t| LinearizedG2::new(t, p0, problem.noise_floor)).collect();
        Surrogate { problem, g2 }
    }

    /// Surrogate at `(P, w)` for explicit per-term `w`.
    pub fn value_at(&self, power: &[f64], w: &[f64]) -> f64 {
        self.problem
            .terms
            .iter()
            .zip(&self.g2)
            .zip(w)
            .map(|((term, g2), &w)| term.weight * (g1_value(term, power, w) - g2.eval(power)))
            .sum()
    }

    /// Surrogate after exact minimization over `w`, with optional
    /// derivatives in `P`. Returns the minimizing `w` per term.
    pub(crate) fn reduced(&self, power: &[f64], derivs: bool) -> Result<(f64, Vec<f64>, DVector<f64>, DMatrix<f64>)> {
        let np = power.len();
        let mut value = 0.0;
        let mut ws = Vec::with_capacity(self.g2.len());
        let (mut grad, mut hess) = if derivs {
            (DVector::zeros(np), DMatrix::zeros(np, np))
        } else {
            (DVector::zeros(0), DMatrix::zeros(0, 0))
        };
        for (term, g2) in self.problem.terms.iter().zip(&self.g2) {
            let r = reduced_g1(term, power, derivs)?;
            value += term.weight * (r.value - g2.eval(power));
            ws.push(r.w);
            if derivs {
                grad.axpy(term.weight, &r.grad, 1.0);
                for &(i, c) in &g2.coeffs {
                    grad[i] -= term.weight * c;
                }
                hess += &r.hess * term.weight;
            }
        }
        Ok((value, ws, grad, hess))
    }

    /// Gradient of the surrogate in `P` at explicit `w`, for checks.
    pub fn grad_at(&self, power: &[f64], w: &[f64]) -> Vec<f64> {
        let np = power.len();
        let mut grad = vec![0.0; np];
        for ((term, g2), &w) in self.problem.terms.iter().zip(&self.g2).zip(w) {
            let m = term.antennas as f64;
            let u = (-w).exp();
            let sigma = term.noise.eval(power);
            let c = term.noise.dense_coeffs(np);
            for &(i, l) in &term.signal {
                let h = sigma + m * l * power[i] * u;
                for j in 0..np {
                    grad[j] += term.weight * LOG2_E * c[j] / h;
                }
                grad[i] += term.weight * LOG2_E * m * l * u / h;
            }
            for &(i, c) in &g2.coeffs {
                grad[i] -= term.weight * c;
            }
        }
        grad
    }
}

/// `F_k(z, t | t0) = M log2 z + sum (log2(e) t0 (t - 1) / (1 - t0) - log2(1 - t0))`.
pub fn linearized_big_f(z: f64, t: &[f64], t0: &[f64], antennas: usize) -> f64 {
    let m = antennas as f64;
    m * z.log2()
        + t.iter()
            .zip(t0)
            .map(|(&t, &t0)| LOG2_E * t0 * (t - 1.0) / (1.0 - t0) - (-t0).ln_1p() * LOG2_E)
            .sum::<f64>()
}

/// Left side of the linearized bound `-z/z0^2 + 2/z0 + sum t / M >= 1`.
pub fn linearized_inverse_bound(z: f64, z0: f64, t: &[f64], antennas: usize) -> f64 {
    -z / (z0 * z0) + 2.0 / z0 + t.iter().sum::<f64>() / antennas as f64
}

/// Which upper bound of `ln z + ln t + ln sigma_2(P)` the slack coupling
/// constraint uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouplingForm {
    /// First-order Taylor expansion; tight at the expansion point, so the
    /// previous iterate stays feasible and the outer loop is monotone.
    #[default]
    Tangent,
    /// `ln(z0 t0 sigma0) + z/z0 + t/t0 + sigma_lin(P)/sigma0 - 2` with
    /// `sigma_lin(P0) = sigma^2`; exceeds the tangent by `sigma^2 / sigma0`,
    /// which cuts off the expansion point itself.
    Printed,
}

/// Upper bound of `ln z + ln t + ln sigma_2(P)` around `(z0, t0, P0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSumBound {
    pub z0: f64,
    pub t0: f64,
    pub sigma0: f64,
    pub sigma_lin: AffineForm,
    pub noise_floor: f64,
    pub form: CouplingForm,
}

impl LogSumBound {
    pub fn new(term: &RateTerm, p0: &[f64], z0: f64, t0: f64, noise_floor: f64, form: CouplingForm) -> Self {
        LogSumBound {
            z0,
            t0,
            sigma0: term.noise.eval(p0),
            sigma_lin: shifted_form(&term.noise, p0, noise_floor),
            noise_floor,
            form,
        }
    }

    pub fn eval(&self, z: f64, t: f64, power: &[f64]) -> f64 {
        let printed = (self.z0 * self.t0 * self.sigma0).ln() + z / self.z0 + t / self.t0
            + self.sigma_lin.eval(power) / self.sigma0
            - 2.0;
        match self.form {
            CouplingForm::Printed => printed,
            CouplingForm::Tangent => printed - self.noise_floor / self.sigma0,
        }
    }
}

/// Chain data fixed for one subproblem.
#[derive(Debug, Clone)]
pub(crate) struct ChainLinearization {
    pub z0: f64,
    pub t0: Vec<f64>,
    pub bounds: Vec<LogSumBound>,
}

pub(crate) fn chain_linearizations(problem: &Problem, point: &LinearizationPoint, form: CouplingForm) -> Vec<ChainLinearization> {
    let p0 = point.power_prev.to_flat();
    problem
        .chains
        .iter()
        .map(|chain| {
            let k = chain.cluster;
            let z0 = point.z_prev[k];
            let t0 = point.t_prev[k].clone();
            let bounds = t0
                .iter()
                .map(|&t0n| LogSumBound::new(&chain.term, &p0, z0, t0n, problem.noise_floor, form))
                .collect();
            ChainLinearization { z0, t0, bounds }
        })
        .collect()
}

/// Signed residuals of every constraint of the linearized subproblem at
/// `x = [P | z | t]`; non-negative means satisfied. Box and linear
/// constraints are normalized by their caps.
pub fn linearized_constraints(
    problem: &Problem,
    point: &LinearizationPoint,
    form: CouplingForm,
    x: &[f64],
) -> Vec<(ConstraintId, f64)> {
    let chains = chain_linearizations(problem, point, form);
    let mut out = Vec::new();
    push_constraints(problem, &chains, x, false, &mut |c| out.push((c.id, c.value)));
    out
}

pub(crate) fn push_constraints(
    problem: &Problem,
    chains: &[ChainLinearization],
    x: &[f64],
    derivs: bool,
    sink: &mut dyn FnMut(crate::sca::barrier::ConstraintEval),
) {
    use crate::sca::barrier::ConstraintEval;
    let np = problem.num_power();
    let power = &x[..np];
    let g = |v: Vec<(usize, f64)>| if derivs { v } else { Vec::new() };

    for (k, m, n, idx) in problem.layout.iter() {
        sink(ConstraintEval::linear(
            ConstraintId::NonNegativePower { cluster: k, user: m, node: n },
            power[idx],
            g(vec![(idx, 1.0)]),
        ));
    }
    for cap in &problem.caps {
        let [a, b] = cap.indices;
        sink(ConstraintEval::linear(
            ConstraintId::NodeCap { cluster: cap.cluster, node: cap.node },
            1.0 - (power[a] + power[b]) / cap.cap,
            g(vec![(a, -1.0 / cap.cap), (b, -1.0 / cap.cap)]),
        ));
    }
    for b in &problem.budgets {
        let total: f64 = b.indices.iter().map(|&i| power[i]).sum();
        sink(ConstraintEval::linear(
            ConstraintId::ClusterBudget { cluster: b.cluster },
            1.0 - total / b.cap,
            g(b.indices.iter().map(|&i| (i, -1.0 / b.cap)).collect()),
        ));
    }
    for row in &problem.leakage {
        let leak: f64 = row.coeffs.iter().map(|&(i, c)| c * power[i]).sum();
        sink(ConstraintEval::linear(
            ConstraintId::SatelliteLeakage { sat_user: row.sat_user },
            1.0 - leak / row.cap,
            g(row.coeffs.iter().map(|&(i, c)| (i, -c / row.cap)).collect()),
        ));
    }

    for (c, (chain, lin)) in problem.chains.iter().zip(chains).enumerate() {
        let k = chain.cluster;
        let m = chain.term.antennas as f64;
        let zi = problem.z_index(c);
        let z = x[zi];
        let nodes = chain.term.num_nodes();
        let t: Vec<f64> = (0..nodes).map(|n| x[problem.t_index(c, n)]).collect();

        sink(ConstraintEval::linear(ConstraintId::AuxZLower { cluster: k }, z - 1.0, g(vec![(zi, 1.0)])));
        for n in 0..nodes {
            let ti = problem.t_index(c, n);
            sink(ConstraintEval::linear(ConstraintId::AuxTLower { cluster: k, node: n }, t[n], g(vec![(ti, 1.0)])));
            sink(ConstraintEval::linear(
                ConstraintId::AuxTUpper { cluster: k, node: n },
                1.0 - t[n],
                g(vec![(ti, -1.0)]),
            ));
        }

        let qos = linearized_big_f(z, &t, &lin.t0, chain.term.antennas) - chain.floor;
        let mut qos_grad = Vec::new();
        let mut qos_hess = Vec::new();
        if derivs {
            qos_grad.push((zi, m * LOG2_E / z));
            qos_hess.push((zi, zi, -m * LOG2_E / (z * z)));
            for n in 0..nodes {
                qos_grad.push((problem.t_index(c, n), LOG2_E * lin.t0[n] / (1.0 - lin.t0[n])));
            }
        }
        sink(ConstraintEval { id: ConstraintId::QosFloor { cluster: k }, soft: true, value: qos, grad: qos_grad, hess: qos_hess });

        let inv = linearized_inverse_bound(z, lin.z0, &t, chain.term.antennas) - 1.0;
        let mut inv_grad = Vec::new();
        if derivs {
            inv_grad.push((zi, -1.0 / (lin.z0 * lin.z0)));
            for n in 0..nodes {
                inv_grad.push((problem.t_index(c, n), 1.0 / m));
            }
        }
        sink(ConstraintEval { id: ConstraintId::InverseBound { cluster: k }, soft: true, value: inv, grad: inv_grad, hess: Vec::new() });

        for (n, bound) in lin.bounds.iter().enumerate() {
            let (pi, l) = chain.term.signal[n];
            let ti = problem.t_index(c, n);
            let value = (m * l * power[pi]).ln() + (-t[n]).ln_1p() - bound.eval(z, t[n], power);
            let value = if value.is_nan() { f64::NEG_INFINITY } else { value };
            let (mut grad, mut hess) = (Vec::new(), Vec::new());
            if derivs {
                grad.push((pi, 1.0 / power[pi]));
                grad.push((ti, -1.0 / (1.0 - t[n]) - 1.0 / bound.t0));
                grad.push((zi, -1.0 / bound.z0));
                for &(j, cj) in &bound.sigma_lin.coeffs {
                    grad.push((j, -cj / bound.sigma0));
                }
                hess.push((pi, pi, -1.0 / (power[pi] * power[pi])));
                hess.push((ti, ti, -1.0 / ((1.0 - t[n]) * (1.0 - t[n]))));
            }
            sink(ConstraintEval { id: ConstraintId::SlackCoupling { cluster: k, node: n }, soft: true, value, grad, hess });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{aux_big_f, tests::toy_network};
    use crate::sca::problem::AccessScheme;
    use crate::sca::ConstraintSet;

    fn two_cluster_problem() -> (Network, Problem, Vec<f64>) {
        let mut net = toy_network(2, 2, 2, 1e-12, 1e-13);
        // break symmetry so every coefficient matters
        net.gains.user[0][1][0][1] = 3e-13;
        net.gains.user[1][0][1][0] = 2e-13;
        net.gains.user[1][1][1][1] = 5e-12;
        let c = ConstraintSet::with_defaults(2);
        let problem = Problem::new(&net, &c, AccessScheme::Noma).unwrap();
        let p: Vec<f64> = (0..problem.num_power()).map(|i| 1.0 + 0.7 * i as f64).collect();
        (net, problem, p)
    }

    #[test]
    fn sigma_linearization_at_expansion_point_is_floor() {
        let (net, problem, p) = two_cluster_problem();
        let point = LinearizationPoint::new(
            PowerAllocation::from_flat(&problem.layout, &p),
            AuxVariables { z: vec![2.0; 2], t: vec![vec![0.3; 2]; 2] },
        );
        for k in 0..2 {
            for m in 0..2 {
                let form = linearize_sigma(&net, &point, k, m);
                assert!((form.eval(&p) - net.noise_w).abs() < 1e-25);
            }
        }
    }

    #[test]
    fn single_interferer_shift() {
        let net = toy_network(2, 1, 1, 1e-12, 1e-14);
        let topo = net.topology.clone();
        let p0 = PowerAllocation::uniform(&topo, 5.0);
        let point = LinearizationPoint::new(p0.clone(), AuxVariables { z: vec![2.0; 2], t: vec![vec![0.5]; 2] });
        let form = linearize_sigma(&net, &point, 0, 0);
        let mut p = p0.clone();
        p.p[1][0][0] += 10.0;
        assert!((form.eval(&p.to_flat()) - (1e-14 + 1e-11)).abs() < 1e-24);
        assert!(form.coeffs.iter().all(|&(_, c)| c == 1e-12));
    }

    #[test]
    fn reduced_gradient_matches_finite_differences() {
        let (_, problem, p) = two_cluster_problem();
        let p0: Vec<f64> = p.iter().map(|x| x * 0.8).collect();
        let s = Surrogate::new(&problem, &p0);
        let (_, _, grad, hess) = s.reduced(&p, true).unwrap();
        for j in 0..p.len() {
            let h = 1e-5 * p[j];
            let mut a = p.clone();
            let mut b = p.clone();
            a[j] += h;
            b[j] -= h;
            let fa = s.reduced(&a, false).unwrap().0;
            let fb = s.reduced(&b, false).unwrap().0;
            let fd = (fa - fb) / (2.0 * h);
            assert!((fd - grad[j]).abs() <= 1e-6 * grad[j].abs().max(1e-3), "j={j}: fd {fd} vs {}", grad[j]);

            let ga = s.reduced(&a, true).unwrap().2;
            let gb = s.reduced(&b, true).unwrap().2;
            for i in 0..p.len() {
                let fd2 = (ga[i] - gb[i]) / (2.0 * h);
                assert!((fd2 - hess[(i, j)]).abs() <= 1e-5 * hess[(i, j)].abs().max(1e-4), "({i},{j}): {fd2} vs {}", hess[(i, j)]);
            }
        }
    }

    #[test]
    fn explicit_gradient_matches_reduced_at_optimal_w() {
        let (_, problem, p) = two_cluster_problem();
        let s = Surrogate::new(&problem, &p);
        let (value, ws, grad, _) = s.reduced(&p, true).unwrap();
        assert!((s.value_at(&p, &ws) - value).abs() < 1e-12);
        let g = s.grad_at(&p, &ws);
        for j in 0..p.len() {
            assert!((g[j] - grad[j]).abs() < 1e-10 * grad[j].abs().max(1.0));
        }
    }

    #[test]
    fn w_minimizes_surrogate() {
        let (_, problem, p) = two_cluster_problem();
        let s = Surrogate::new(&problem, &p);
        let (value, ws, _, _) = s.reduced(&p, false).unwrap();
        for i in 0..ws.len() {
            for f in [0.99, 1.01] {
                let mut w = ws.clone();
                w[i] *= f;
                assert!(s.value_at(&p, &w) >= value - 1e-12);
            }
        }
    }

    #[test]
    fn surrogate_offset_at_expansion_point() {
        let (_, problem, p) = two_cluster_problem();
        let s = Surrogate::new(&problem, &p);
        let (value, _, _, _) = s.reduced(&p, false).unwrap();
        let exact = problem.objective(&p).unwrap();
        let offset: f64 = problem
            .terms
            .iter()
            .map(|t| t.num_nodes() as f64 * LOG2_E * problem.noise_floor / t.noise.eval(&p))
            .sum();
        assert!((exact - value - offset).abs() < 1e-10, "{exact} {value} {offset}");
    }

    #[test]
    fn big_f_linearization_is_tangent_lower_bound() {
        let t0 = [0.3, 0.6];
        let z = 3.0;
        assert!((linearized_big_f(z, &t0, &t0, 3) - aux_big_f(z, &t0, 3)).abs() < 1e-12);
        for t in [[0.1, 0.2], [0.5, 0.9], [0.01, 0.99]] {
            assert!(linearized_big_f(z, &t, &t0, 3) <= aux_big_f(z, &t, 3) + 1e-12);
        }
    }

    #[test]
    fn inverse_bound_tangent() {
        let z0 = 2.5;
        assert!((linearized_inverse_bound(z0, z0, &[0.0], 2) - 1.0 / z0).abs() < 1e-15);
        for z in [1.0, 2.0, 4.0, 10.0] {
            assert!(linearized_inverse_bound(z, z0, &[0.0], 2) <= 1.0 / z);
        }
    }
}
