//! Interference-plus-noise levels and the deterministic-equivalent ergodic
//! rate approximation.
//!
//! For user `m` of cluster `k` with per-node received SNRs
//! `gamma_n = l_n P_n / sigma^2` and `M` receive antennas, the ergodic rate is
//! approximated by
//!
//! ```text
//! g(v) = sum_n log2(1 + M gamma_n / v) + M log2 v - M log2(e) (1 - 1/v)
//! ```
//!
//! evaluated at the fixed point `v* = 1 + sum_n gamma_n / (1 + M gamma_n / v*)`,
//! which is also the minimizer of `g` over `v >= 1`.

use std::f64::consts::LOG2_E;

use crate::allocation::PowerAllocation;
use crate::error::{Error, Result};
use crate::network::Network;

/// Absolute tolerance on `|v - rhs(v)|` for the fixed point.
pub const FIXED_POINT_TOL: f64 = 1e-10;
pub const FIXED_POINT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBreakdown {
    pub sigma_user1: Vec<f64>,
    pub sigma_user2: Vec<f64>,
    pub sigma_sic: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointResult {
    pub v_star: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Auxiliary variables of the QoS reformulation: `z[k]` and slack `t[k][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxVariables {
    pub z: Vec<f64>,
    pub t: Vec<Vec<f64>>,
}

/// Interference at user `m` of cluster `k` from every other cluster's total
/// transmit power.
pub fn inter_cluster_interference(net: &Network, power: &PowerAllocation, k: usize, m: usize) -> f64 {
    (0..net.num_clusters())
        .filter(|&i| i != k)
        .map(|i| {
            (0..net.num_nodes(i))
                .map(|n| net.gains.user(k, m, i, n) * power.node_total(i, n))
                .sum::<f64>()
        })
        .sum()
}

fn intra_cluster_from_user1(net: &Network, power: &PowerAllocation, k: usize, rx_user: usize) -> f64 {
    (0..net.num_nodes(k))
        .map(|n| net.gains.user(k, rx_user, k, n) * power.get(k, 0, n))
        .sum()
}

/// Interference plus noise at the SIC user after cancelling the far user.
pub fn noise_user1(net: &Network, power: &PowerAllocation, k: usize) -> f64 {
    inter_cluster_interference(net, power, k, 0) + net.noise_w
}

/// Interference plus noise at the far user, which treats the near user's
/// signal as noise.
pub fn noise_user2(net: &Network, power: &PowerAllocation, k: usize) -> f64 {
    inter_cluster_interference(net, power, k, 1) + intra_cluster_from_user1(net, power, k, 1) + net.noise_w
}

/// Interference plus noise seen by the SIC user while decoding the far
/// user's message.
pub fn noise_sic(net: &Network, power: &PowerAllocation, k: usize) -> f64 {
    inter_cluster_interference(net, power, k, 0) + intra_cluster_from_user1(net, power, k, 0) + net.noise_w
}

pub fn user_noise(net: &Network, power: &PowerAllocation, k: usize, m: usize) -> f64 {
    if m == 0 {
        noise_user1(net, power, k)
    } else {
        noise_user2(net, power, k)
    }
}

pub fn noise_breakdown(net: &Network, power: &PowerAllocation) -> NoiseBreakdown {
    let k = net.num_clusters();
    NoiseBreakdown {
        sigma_user1: (0..k).map(|k| noise_user1(net, power, k)).collect(),
        sigma_user2: (0..k).map(|k| noise_user2(net, power, k)).collect(),
        sigma_sic: (0..k).map(|k| noise_sic(net, power, k)).collect(),
    }
}

/// Per-node SNRs `l_{rx,n}^{(k,k)} P_{tx,n}^{(k)} / noise`.
pub fn link_snrs(net: &Network, power: &PowerAllocation, noise: f64, k: usize, rx_user: usize, tx_user: usize) -> Vec<f64> {
    (0..net.num_nodes(k))
        .map(|n| net.gains.user(k, rx_user, k, n) * power.get(k, tx_user, n) / noise)
        .collect()
}

/// Right-hand side of the fixed-point equation at `v`.
pub fn fixed_point_rhs(snr: &[f64], antennas: usize, v: f64) -> f64 {
    let m = antennas as f64;
    1.0 + snr.iter().map(|&g| g / (1.0 + m * g / v)).sum::<f64>()
}

/// Solves `v = rhs(v)` for `v >= 1`.
///
/// `h(v) = v - rhs(v)` is convex and increasing to the right of its root, and
/// `h(1 + sum gamma) >= 0`, so Newton's method started there decreases
/// monotonically onto the root.
pub fn solve_fixed_point(snr: &[f64], antennas: usize) -> Result<FixedPointResult> {
    if snr.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::Domain(format!("SNRs must be finite and non-negative: {snr:?}")));
    }
    let m = antennas as f64;
    let mut v = 1.0 + snr.iter().sum::<f64>();
    let mut trace = Vec::new();
    for iter in 0..FIXED_POINT_MAX_ITER {
        let h = v - fixed_point_rhs(snr, antennas, v);
        let residual = h.abs();
        let slope = 1.0 - snr.iter().map(|&g| m * g * g / ((v + m * g) * (v + m * g))).sum::<f64>();
        if residual <= FIXED_POINT_TOL {
            let (v, residual) = polish(snr, antennas, v, h, slope);
            return Ok(FixedPointResult { v_star: v, residual, iterations: iter });
        }
        let next = (v - h / slope).max(1.0);
        trace.push(v);
        if !(next < v) || !slope.is_finite() || slope <= 0.0 {
            // Rounding floor reached: accept if the residual sits at machine
            // precision relative to v.
            if residual <= 64.0 * f64::EPSILON * v {
                return Ok(FixedPointResult { v_star: v, residual, iterations: iter });
            }
            return Err(Error::FixedPoint { iterations: iter, residual, trace });
        }
        v = next;
    }
    let residual = (v - fixed_point_rhs(snr, antennas, v)).abs();
    Err(Error::FixedPoint { iterations: FIXED_POINT_MAX_ITER, residual, trace })
}

/// Extra Newton steps past the tolerance, kept while they shrink the
/// residual. Rates derived from `v*` inherit its error divided by `v*`, which
/// matters when the rate itself is tiny.
fn polish(snr: &[f64], antennas: usize, mut v: f64, mut h: f64, mut slope: f64) -> (f64, f64) {
    let m = antennas as f64;
    for _ in 0..3 {
        if h == 0.0 || !(slope > 0.0) {
            break;
        }
        let next = v - h / slope;
        let h_next = next - fixed_point_rhs(snr, antennas, next);
        if !(next >= 1.0 && h_next.abs() < h.abs()) {
            break;
        }
        v = next;
        h = h_next;
        slope = 1.0 - snr.iter().map(|&g| m * g * g / ((v + m * g) * (v + m * g))).sum::<f64>();
    }
    (v, h.abs())
}

/// The g-form rate (bits/s/Hz) for an arbitrary `v`.
pub fn g_form(snr: &[f64], antennas: usize, v: f64) -> f64 {
    let m = antennas as f64;
    snr.iter().map(|&g| (m * g / v).ln_1p()).sum::<f64>() * LOG2_E + m * v.log2() - m * LOG2_E * (1.0 - 1.0 / v)
}

/// Rate approximation at the fixed point for the given SNRs.
pub fn approx_rate_from_snr(snr: &[f64], antennas: usize) -> Result<f64> {
    let fp = solve_fixed_point(snr, antennas)?;
    Ok(g_form(snr, antennas, fp.v_star))
}

pub fn fixed_point_v(net: &Network, power: &PowerAllocation, noise: f64, k: usize, m: usize) -> Result<FixedPointResult> {
    if !(noise > 0.0) {
        return Err(Error::Domain(format!("noise must be positive, got {noise}")));
    }
    solve_fixed_point(&link_snrs(net, power, noise, k, m, m), net.antennas(k))
}

/// Approximate ergodic rate of user `m` in cluster `k` under the given
/// interference-plus-noise level.
pub fn approx_rate(net: &Network, power: &PowerAllocation, noise: f64, k: usize, m: usize) -> Result<f64> {
    let fp = fixed_point_v(net, power, noise, k, m)?;
    Ok(g_form(&link_snrs(net, power, noise, k, m, m), net.antennas(k), fp.v_star))
}

/// Approximate rate of user `m` in cluster `k` with its NOMA noise level.
pub fn user_rate(net: &Network, power: &PowerAllocation, k: usize, m: usize) -> Result<f64> {
    approx_rate(net, power, user_noise(net, power, k, m), k, m)
}

/// `rates[k][m]` for every user.
pub fn user_rates(net: &Network, power: &PowerAllocation) -> Result<Vec<[f64; 2]>> {
    (0..net.num_clusters())
        .map(|k| Ok([user_rate(net, power, k, 0)?, user_rate(net, power, k, 1)?]))
        .collect()
}

pub fn approx_sum_rate(net: &Network, power: &PowerAllocation) -> Result<f64> {
    Ok(user_rates(net, power)?.iter().flatten().sum())
}

/// Rate at which the SIC user can decode the far user's message.
pub fn sic_cap(net: &Network, power: &PowerAllocation, k: usize) -> Result<f64> {
    let noise = noise_sic(net, power, k);
    let snr = link_snrs(net, power, noise, k, 0, 1);
    approx_rate_from_snr(&snr, net.antennas(k))
}

/// Mean interference power leaked into satellite user `j`.
pub fn satellite_leakage(net: &Network, power: &PowerAllocation, j: usize) -> f64 {
    (0..net.num_clusters())
        .map(|k| (0..net.num_nodes(k)).map(|n| net.gains.sat(j, k, n) * power.node_total(k, n)).sum::<f64>())
        .sum()
}

pub fn max_satellite_leakage(net: &Network, power: &PowerAllocation) -> f64 {
    (0..net.num_sat_users()).map(|j| satellite_leakage(net, power, j)).fold(0.0, f64::max)
}

fn far_user_snr(net: &Network, power: &PowerAllocation, k: usize) -> Vec<f64> {
    let noise = noise_user2(net, power, k);
    link_snrs(net, power, noise, k, 1, 1)
}

/// Fractions `M gamma_n / (z + M gamma_n)`, the equality values of the slack
/// variables `t_{k,n}`.
pub fn slack_fractions(snr: &[f64], antennas: usize, z: f64) -> Vec<f64> {
    let m = antennas as f64;
    snr.iter().map(|&g| m * g / (z + m * g)).collect()
}

/// The auxiliary function `f_k(P, z)` in its direct form.
pub fn aux_f_direct(snr: &[f64], antennas: usize, z: f64) -> f64 {
    let m = antennas as f64;
    let sum: f64 = snr
        .iter()
        .map(|&g| (m * g / z).ln_1p() * LOG2_E - LOG2_E * m * g / (z + m * g))
        .sum();
    sum + m * z.log2()
}

/// `f_k(P, z)` written through the slack fractions `q_n`:
/// `-log2(e) sum (q_n + ln(1 - q_n)) + M log2 z`.
pub fn aux_f_reorganized(snr: &[f64], antennas: usize, z: f64) -> f64 {
    aux_big_f(z, &slack_fractions(snr, antennas, z), antennas)
}

pub fn aux_f(net: &Network, power: &PowerAllocation, z: f64, k: usize) -> f64 {
    aux_f_direct(&far_user_snr(net, power, k), net.antennas(k), z)
}

/// `F_k(z, t) = -log2(e) sum_n (t_n + ln(1 - t_n)) + M log2 z`.
pub fn aux_big_f(z: f64, t: &[f64], antennas: usize) -> f64 {
    let m = antennas as f64;
    -LOG2_E * t.iter().map(|&t| t + (-t).ln_1p()).sum::<f64>() + m * z.log2()
}

/// `1/z + sum_n gamma_n / (z + M gamma_n)`; equals one exactly at `z = v*`
/// of the far user and is strictly decreasing in `z`.
pub fn inverse_bound_expression(snr: &[f64], antennas: usize, z: f64) -> f64 {
    let m = antennas as f64;
    1.0 / z + snr.iter().map(|&g| g / (z + m * g)).sum::<f64>()
}

/// `z_k = v*_{k,2}` and `t_{k,n}` at their equality values for every cluster.
pub fn aux_at_equality(net: &Network, power: &PowerAllocation) -> Result<AuxVariables> {
    let mut z = Vec::with_capacity(net.num_clusters());
    let mut t = Vec::with_capacity(net.num_clusters());
    for k in 0..net.num_clusters() {
        let snr = far_user_snr(net, power, k);
        let v = solve_fixed_point(&snr, net.antennas(k))?.v_star;
        t.push(slack_fractions(&snr, net.antennas(k), v));
        z.push(v);
    }
    Ok(AuxVariables { z, t })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::channel::{Cluster, LargeScaleGains, Position, Topology};
    use approx::assert_relative_eq;

    pub(crate) fn toy_network(k: usize, nodes: usize, antennas: usize, gain: f64, noise: f64) -> Network {
        let cluster = Cluster {
            tbs: (0..nodes).map(|n| Position::new(n as f64 * 10.0, 0.0, 200.0)).collect(),
            uavs: vec![],
            users: [Position::new(0.0, 1e4, 5.0), Position::new(0.0, 5e4, 5.0)],
            antennas_per_user: antennas,
        };
        let topology = Topology { clusters: vec![cluster; k], satellite_users: vec![Position::new(0.0, 2e5, 5.0)] };
        let gains = LargeScaleGains {
            user: vec![vec![[vec![gain; nodes], vec![gain; nodes]]; k]; k],
            sat: vec![vec![vec![gain; nodes]; k]],
        };
        Network::from_gains(topology, gains, noise).unwrap()
    }

    #[test]
    fn noise_single_cluster_is_floor() {
        let net = toy_network(1, 2, 2, 1e-12, 1e-14);
        let p = PowerAllocation::uniform(&net.topology, 10.0);
        assert_eq!(noise_user1(&net, &p, 0), 1e-14);
        let zero = PowerAllocation::zeros(&net.topology);
        assert_eq!(noise_user2(&net, &zero, 0), 1e-14);
        assert_eq!(noise_sic(&net, &zero, 0), noise_user1(&net, &zero, 0));
    }

    #[test]
    fn noise_single_terms() {
        let sigma = 2e-14;
        let mut net = toy_network(2, 1, 1, 1e-12, sigma);
        // Only cluster 1's transmitter interferes with cluster 0.
        net.gains.user[0][0][0][0] = 0.0;
        let mut p = PowerAllocation::zeros(&net.topology);
        p.p[1][0][0] = 30.0;
        p.p[1][1][0] = 20.0;
        assert_relative_eq!(noise_user1(&net, &p, 0), sigma + 5e-11, max_relative = 1e-12);

        let net1 = toy_network(1, 1, 1, 1e-12, sigma);
        let mut p = PowerAllocation::zeros(&net1.topology);
        p.p[0][0][0] = 40.0;
        assert_relative_eq!(noise_user2(&net1, &p, 0), sigma + 4e-11, max_relative = 1e-12);
        assert_relative_eq!(noise_sic(&net1, &p, 0), sigma + 4e-11, max_relative = 1e-12);
        assert_relative_eq!(
            noise_sic(&net1, &p, 0) - noise_user1(&net1, &p, 0),
            4e-11,
            max_relative = 1e-9
        );
    }

    #[test]
    fn fixed_point_quadratic_case() {
        let fp = solve_fixed_point(&[2.0], 1).unwrap();
        assert!((fp.v_star - 2.0).abs() < 1e-10, "{}", fp.v_star);
        assert!(fp.residual < 1e-10);
        assert_eq!(solve_fixed_point(&[0.0, 0.0], 3).unwrap().v_star, 1.0);
        assert_eq!(solve_fixed_point(&[], 3).unwrap().v_star, 1.0);
    }

    #[test]
    fn fixed_point_high_snr_equal_dimensions() {
        // M = N at high SNR makes the map nearly non-contractive.
        let snr = [3e4, 1e5, 2e3];
        let fp = solve_fixed_point(&snr, 3).unwrap();
        assert!((fp.v_star - fixed_point_rhs(&snr, 3, fp.v_star)).abs() < 1e-10);
    }

    #[test]
    fn fixed_point_rejects_bad_input() {
        assert!(solve_fixed_point(&[-1.0], 1).is_err());
        assert!(solve_fixed_point(&[f64::NAN], 1).is_err());
    }

    #[test]
    fn g_form_reference() {
        let rate = approx_rate_from_snr(&[2.0], 1).unwrap();
        assert_relative_eq!(rate, 2.0 - LOG2_E / 2.0, max_relative = 1e-10);
        assert_relative_eq!(rate, 1.2787, epsilon = 1e-4);
        assert_eq!(approx_rate_from_snr(&[0.0, 0.0], 2).unwrap(), 0.0);
    }

    #[test]
    fn fixed_point_minimizes_g() {
        let snr = [0.7, 4.0, 12.0];
        let v = solve_fixed_point(&snr, 3).unwrap().v_star;
        let at_star = g_form(&snr, 3, v);
        for i in 0..=3000 {
            let x = 1.0 + (3.0 * v - 1.0) * i as f64 / 3000.0;
            assert!(g_form(&snr, 3, x) >= at_star - 1e-12, "v={x}");
        }
    }

    #[test]
    fn aux_forms_agree_and_match_g() {
        let snr = [0.3, 5.0, 40.0];
        for z in [1.0, 1.7, 3.0, 10.0] {
            let a = aux_f_direct(&snr, 3, z);
            let b = aux_f_reorganized(&snr, 3, z);
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        let v = solve_fixed_point(&snr, 3).unwrap().v_star;
        assert_relative_eq!(aux_f_direct(&snr, 3, v), g_form(&snr, 3, v), max_relative = 1e-10);
        assert_relative_eq!(inverse_bound_expression(&snr, 3, v), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn aux_f_zero_power_is_log_term() {
        assert_relative_eq!(aux_f_direct(&[0.0, 0.0], 3, 2.5), 3.0 * 2.5f64.log2(), max_relative = 1e-14);
    }

    #[test]
    fn big_f_basics() {
        assert_eq!(aux_big_f(1.0, &[0.0, 0.0], 3), 0.0);
        let mut prev = aux_big_f(1.3, &[0.0], 2);
        for i in 1..100 {
            let cur = aux_big_f(1.3, &[i as f64 / 100.0], 2);
            assert!(cur > prev);
            prev = cur;
        }
    }

    #[test]
    fn sic_cap_with_colocated_users() {
        let net = toy_network(1, 2, 2, 1e-12, 1e-14);
        let mut p = PowerAllocation::zeros(&net.topology);
        p.p[0][1] = vec![3.0, 5.0];
        let a = sic_cap(&net, &p, 0).unwrap();
        let b = user_rate(&net, &p, 0, 1).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
        let zero = PowerAllocation::zeros(&net.topology);
        assert_eq!(sic_cap(&net, &zero, 0).unwrap(), 0.0);
    }

    #[test]
    fn leakage_is_linear() {
        let net = toy_network(2, 2, 2, 1e-13, 1e-14);
        let p = PowerAllocation::uniform(&net.topology, 12.5);
        let base = satellite_leakage(&net, &p, 0);
        assert_relative_eq!(satellite_leakage(&net, &p.scaled(3.0), 0), 3.0 * base, max_relative = 1e-12);
        assert_eq!(satellite_leakage(&net, &PowerAllocation::zeros(&net.topology), 0), 0.0);
        let single = toy_network(1, 1, 1, 1e-13, 1e-14);
        let p = PowerAllocation::uniform(&single.topology, 50.0);
        assert_relative_eq!(satellite_leakage(&single, &p, 0), 1e-11, max_relative = 1e-12);
    }

    #[test]
    fn sum_rate_matches_parts() {
        let net = toy_network(2, 2, 2, 1e-12, 1e-13);
        let mut p = PowerAllocation::uniform(&net.topology, 4.0);
        p.p[1][0][1] = 9.0;
        let total = approx_sum_rate(&net, &p).unwrap();
        let parts: f64 = user_rates(&net, &p).unwrap().iter().flatten().sum();
        assert_eq!(total, parts);
        assert_eq!(approx_sum_rate(&net, &PowerAllocation::zeros(&net.topology)).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_pair_differs_only_by_intra_interference() {
        let net = toy_network(1, 1, 1, 1e-12, 1e-13);
        let p = PowerAllocation::uniform(&net.topology, 5.0);
        let r1 = user_rate(&net, &p, 0, 0).unwrap();
        let r2 = user_rate(&net, &p, 0, 1).unwrap();
        assert!(r1 > r2);
        let r2_no_intra = approx_rate(&net, &p, noise_user1(&net, &p, 0), 0, 1).unwrap();
        assert_relative_eq!(r1, r2_no_intra, max_relative = 1e-12);
    }
}
