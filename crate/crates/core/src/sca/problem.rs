//! Flat description of the allocation problem: rate terms with affine
//! interference-plus-noise forms, QoS chains for the far users, and the
//! linear power constraints. NOMA and the orthogonal baseline differ only in
//! how these pieces are assembled.

use crate::allocation::{PowerAllocation, PowerLayout};
use crate::channel::NodeKind;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::sca::ConstraintSet;

/// `constant + sum coeff * x[index]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub constant: f64,
    pub coeffs: Vec<(usize, f64)>,
}

impl AffineForm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    pub fn dense_coeffs(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for &(i, c) in &self.coeffs {
            out[i] += c;
        }
        out
    }
}

/// Multiple-access model used to assemble the rate terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AccessScheme {
    /// Superposition with SIC at user 0; the far user sees the near user's
    /// signal as interference.
    Noma,
    /// Orthogonal resources: no intra-cluster interference, user 0 weighted
    /// by `split` and user 1 by `1 - split`.
    Orthogonal { split: f64 },
}

impl AccessScheme {
    pub fn weights(&self) -> [f64; 2] {
        match *self {
            AccessScheme::Noma => [1.0, 1.0],
            AccessScheme::Orthogonal { split } => [split, 1.0 - split],
        }
    }
}

/// One user's rate `g_{k,m}` as a function of the flat power vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTerm {
    pub cluster: usize,
    pub user: usize,
    pub antennas: usize,
    pub weight: f64,
    /// `(power index, gain)` of the useful signal, one entry per transmitter.
    pub signal: Vec<(usize, f64)>,
    pub noise: AffineForm,
}

impl RateTerm {
    pub fn num_nodes(&self) -> usize {
        self.signal.len()
    }

    pub fn snr(&self, power: &[f64]) -> Vec<f64> {
        let noise = self.noise.eval(power);
        self.signal.iter().map(|&(i, l)| l * power[i] / noise).collect()
    }
}

/// QoS chain of cluster `k`: the far user's rate term and its floor. Only
/// clusters with a positive floor carry a chain; a zero floor is vacuous.
#[derive(Debug, Clone, PartialEq)]
pub struct QosChain {
    pub cluster: usize,
    /// Floor on the unweighted far-user rate.
    pub floor: f64,
    pub term: RateTerm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeCap {
    pub cluster: usize,
    pub node: usize,
    pub indices: [usize; 2],
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Budget {
    pub cluster: usize,
    pub indices: Vec<usize>,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeakageRow {
    pub sat_user: usize,
    pub coeffs: Vec<(usize, f64)>,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub scheme: AccessScheme,
    pub layout: PowerLayout,
    pub terms: Vec<RateTerm>,
    pub chains: Vec<QosChain>,
    pub caps: Vec<NodeCap>,
    pub budgets: Vec<Budget>,
    pub leakage: Vec<LeakageRow>,
    pub noise_floor: f64,
    /// Offset of each chain's slack variables inside the `t` block.
    pub t_offsets: Vec<usize>,
}

impl Problem {
    pub fn new(net: &Network, constraints: &ConstraintSet, scheme: AccessScheme) -> Result<Self> {
        constraints.validate(net.num_clusters())?;
        if let AccessScheme::Orthogonal { split } = scheme {
            if !(split > 0.0 && split < 1.0) {
                return Err(Error::Domain(format!("orthogonal split must lie in (0, 1), got {split}")));
            }
        }
        let layout = PowerLayout::new(&net.topology);
        let k_total = net.num_clusters();
        let weights = scheme.weights();

        let mut terms = Vec::with_capacity(2 * k_total);
        for k in 0..k_total {
            for m in 0..2 {
                let mut coeffs = Vec::new();
                for i in (0..k_total).filter(|&i| i != k) {
                    for n in 0..net.num_nodes(i) {
                        let l = net.gains.user(k, m, i, n);
                        coeffs.push((layout.index(i, 0, n), l));
                        coeffs.push((layout.index(i, 1, n), l));
                    }
                }
                if m == 1 && scheme == AccessScheme::Noma {
                    for n in 0..net.num_nodes(k) {
                        coeffs.push((layout.index(k, 0, n), net.gains.user(k, 1, k, n)));
                    }
                }
                terms.push(RateTerm {
                    cluster: k,
                    user: m,
                    antennas: net.antennas(k),
                    weight: weights[m],
                    signal: (0..net.num_nodes(k))
                        .map(|n| (layout.index(k, m, n), net.gains.user(k, m, k, n)))
                        .collect(),
                    noise: AffineForm { constant: net.noise_w, coeffs },
                });
            }
        }

        let chains: Vec<QosChain> = (0..k_total)
            .filter(|&k| constraints.qos_floor[k] > 0.0)
            .map(|k| QosChain {
                cluster: k,
                floor: constraints.qos_floor[k] / weights[1],
                term: terms[2 * k + 1].clone(),
            })
            .collect();

        let mut caps = Vec::new();
        let mut budgets = Vec::new();
        for (k, cluster) in net.topology.clusters.iter().enumerate() {
            for n in 0..cluster.num_nodes() {
                let cap = match cluster.node_kind(n) {
                    NodeKind::Tbs => constraints.p_tbs_max,
                    NodeKind::Uav => constraints.p_uav_max,
                };
                caps.push(NodeCap {
                    cluster: k,
                    node: n,
                    indices: [layout.index(k, 0, n), layout.index(k, 1, n)],
                    cap,
                });
            }
            budgets.push(Budget {
                cluster: k,
                indices: (0..2).flat_map(|m| (0..cluster.num_nodes()).map(move |n| (m, n)))
                    .map(|(m, n)| layout.index(k, m, n))
                    .collect(),
                cap: constraints.p_max,
            });
        }

        let leakage = (0..net.num_sat_users())
            .map(|j| LeakageRow {
                sat_user: j,
                coeffs: layout
                    .iter()
                    .map(|(k, _, n, idx)| (idx, net.gains.sat(j, k, n)))
                    .collect(),
                cap: constraints.leakage_cap,
            })
            .collect();

        let mut t_offsets = Vec::with_capacity(chains.len());
        let mut acc = 0;
        for chain in &chains {
            t_offsets.push(acc);
            acc += chain.term.num_nodes();
        }

        Ok(Problem {
            scheme,
            layout,
            terms,
            chains,
            caps,
            budgets,
            leakage,
            noise_floor: net.noise_w,
            t_offsets,
        })
    }

    pub fn num_power(&self) -> usize {
        self.layout.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.layout.num_clusters()
    }

    pub fn num_slack(&self) -> usize {
        self.chains.iter().map(|c| c.term.num_nodes()).sum()
    }

    /// Total variable count `[P | z | t]`; `z` and `t` exist for chains only.
    pub fn dim(&self) -> usize {
        self.num_power() + self.chains.len() + self.num_slack()
    }

    /// Index of `z` for chain `c`.
    pub fn z_index(&self, c: usize) -> usize {
        self.num_power() + c
    }

    /// Index of `t_n` for chain `c`.
    pub fn t_index(&self, c: usize, n: usize) -> usize {
        self.num_power() + self.chains.len() + self.t_offsets[c] + n
    }

    /// Weighted sum of approximate rates at a flat power vector.
    pub fn objective(&self, power: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for term in &self.terms {
            total += term.weight * crate::rates::approx_rate_from_snr(&term.snr(power), term.antennas)?;
        }
        Ok(total)
    }

    /// Largest violation of the exact (non-linearized) constraints at a
    /// power allocation, normalized per constraint family. Non-positive means
    /// feasible.
    pub fn max_violation(&self, power: &PowerAllocation) -> Result<f64> {
        let flat = power.to_flat();
        let mut worst = flat.iter().map(|&p| -p).fold(f64::NEG_INFINITY, f64::max);
        for cap in &self.caps {
            worst = worst.max((flat[cap.indices[0]] + flat[cap.indices[1]]) / cap.cap - 1.0);
        }
        for b in &self.budgets {
            worst = worst.max(b.indices.iter().map(|&i| flat[i]).sum::<f64>() / b.cap - 1.0);
        }
        for row in &self.leakage {
            let leak: f64 = row.coeffs.iter().map(|&(i, c)| c * flat[i]).sum();
            worst = worst.max(leak / row.cap - 1.0);
        }
        for chain in &self.chains {
            let rate = crate::rates::approx_rate_from_snr(&chain.term.snr(&flat), chain.term.antennas)?;
            worst = worst.max(chain.floor - rate);
        }
        Ok(worst)
    }
}
