//! Power allocation tables and their flat vector layout.

use serde::{Deserialize, Serialize};

use crate::channel::Topology;

/// Transmit powers `p[k][m][n]` in watts: cluster `k`, user `m` (0 is the SIC
/// user), transmitter `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub p: Vec<[Vec<f64>; 2]>,
}

impl PowerAllocation {
    pub fn zeros(topology: &Topology) -> Self {
        PowerAllocation {
            p: topology
                .clusters
                .iter()
                .map(|c| [vec![0.0; c.num_nodes()], vec![0.0; c.num_nodes()]])
                .collect(),
        }
    }

    /// Same shape as `topology`, every entry set to `value`.
    pub fn uniform(topology: &Topology, value: f64) -> Self {
        let mut p = Self::zeros(topology);
        p.map_inplace(|_| value);
        p
    }

    #[inline]
    pub fn get(&self, k: usize, m: usize, n: usize) -> f64 {
        self.p[k][m][n]
    }

    /// Total power `P_n^{(k)}` radiated by transmitter `n` of cluster `k`.
    #[inline]
    pub fn node_total(&self, k: usize, n: usize) -> f64 {
        self.p[k][0][n] + self.p[k][1][n]
    }

    /// Sum over all transmitters and both users of cluster `k`.
    pub fn cluster_total(&self, k: usize) -> f64 {
        self.p[k].iter().flatten().sum()
    }

    pub fn num_clusters(&self) -> usize {
        self.p.len()
    }

    pub fn num_nodes(&self, k: usize) -> usize {
        self.p[k][0].len()
    }

    pub fn map_inplace(&mut self, mut f: impl FnMut(f64) -> f64) {
        for cluster in &mut self.p {
            for user in cluster.iter_mut() {
                for v in user.iter_mut() {
                    *v = f(*v);
                }
            }
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.map_inplace(|v| v * factor);
        out
    }

    pub fn is_nonnegative(&self) -> bool {
        self.p.iter().flatten().flatten().all(|&v| v >= 0.0 && v.is_finite())
    }

    /// Entries in `(k, m, n)` order, matching [`PowerLayout`].
    pub fn to_flat(&self) -> Vec<f64> {
        self.p.iter().flat_map(|c| c.iter().flatten().copied()).collect()
    }

    pub fn from_flat(layout: &PowerLayout, flat: &[f64]) -> Self {
        let p = (0..layout.num_clusters())
            .map(|k| {
                let n = layout.nodes[k];
                let base = layout.offsets[k];
                [flat[base..base + n].to_vec(), flat[base + n..base + 2 * n].to_vec()]
            })
            .collect();
        PowerAllocation { p }
    }

    pub fn shape_matches(&self, topology: &Topology) -> bool {
        self.p.len() == topology.num_clusters()
            && self
                .p
                .iter()
                .zip(&topology.clusters)
                .all(|(p, c)| p[0].len() == c.num_nodes() && p[1].len() == c.num_nodes())
    }
}

/// Index map from `(k, m, n)` to a position in a flat power vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PowerLayout {
    pub nodes: Vec<usize>,
    pub offsets: Vec<usize>,
    len: usize,
}

impl PowerLayout {
    pub fn new(topology: &Topology) -> Self {
        let nodes: Vec<usize> = topology.clusters.iter().map(|c| c.num_nodes()).collect();
        let mut offsets = Vec::with_capacity(nodes.len());
        let mut acc = 0;
        for &n in &nodes {
            offsets.push(acc);
            acc += 2 * n;
        }
        PowerLayout { nodes, offsets, len: acc }
    }

    #[inline]
    pub fn index(&self, k: usize, m: usize, n: usize) -> usize {
        self.offsets[k] + m * self.nodes[k] + n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_clusters(&self) -> usize {
        self.nodes.len()
    }

    /// Iterates `(k, m, n, index)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        (0..self.num_clusters()).flat_map(move |k| {
            (0..2).flat_map(move |m| (0..self.nodes[k]).map(move |n| (k, m, n, self.index(k, m, n))))
        })
    }
}
