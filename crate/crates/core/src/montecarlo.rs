//! Monte Carlo estimate of the ergodic rate over Rayleigh small-scale fading.
//!
//! Interference from other clusters and from the co-cluster user is treated
//! as white noise at its mean power, so the estimate targets exactly the
//! quantity the deterministic approximation in [`crate::rates`] targets.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::allocation::PowerAllocation;
use crate::channel::{complex_gaussian_matrix, Complex64};
use crate::network::Network;
use crate::rates::user_noise;

const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

/// `log2 det(I + S diag(d) S^H)` through a Cholesky factor of the Hermitian
/// positive definite argument.
pub fn log2_det_identity_plus(s: &DMatrix<Complex64>, d: &[f64]) -> f64 {
    let m = s.nrows();
    let mut a = DMatrix::<Complex64>::identity(m, m);
    for (n, &dn) in d.iter().enumerate() {
        if dn == 0.0 {
            continue;
        }
        let col = s.column(n);
        for c in 0..m {
            let scaled = col[c].conj() * dn;
            for r in 0..m {
                a[(r, c)] += col[r] * scaled;
            }
        }
    }
    match a.clone().cholesky() {
        Some(ch) => {
            let l = ch.l_dirty();
            2.0 * (0..m).map(|i| l[(i, i)].re.log2()).sum::<f64>()
        }
        // Only reachable through rounding on a singular increment; fall back
        // to the LU determinant.
        None => a.determinant().re.log2(),
    }
}

/// Estimates `E[log2 det(I + H P H^H / noise)]` for the link from the
/// `tx_user` streams of cluster `k` to receiver `rx_user` of cluster `k`.
pub fn monte_carlo_link_rate(
    net: &Network,
    power: &PowerAllocation,
    noise: f64,
    k: usize,
    rx_user: usize,
    tx_user: usize,
    samples: usize,
    seed: u64,
) -> McEstimate {
    let samples = samples.max(1);
    let nodes = net.num_nodes(k);
    let antennas = net.antennas(k);
    let d: Vec<f64> = (0..nodes)
        .map(|n| net.gains.user(k, rx_user, k, n) * power.get(k, tx_user, n) / noise)
        .collect();
    if d.iter().all(|&x| x == 0.0) {
        return McEstimate { mean: 0.0, std_err: 0.0, samples };
    }
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut sum = 0.0;
            let mut sq = 0.0;
            for _ in 0..count {
                let s = complex_gaussian_matrix(&mut rng, antennas, nodes);
                let r = log2_det_identity_plus(&s, &d);
                sum += r;
                sq += r * r;
            }
            (sum, sq)
        })
        .collect();
    let (sum, sq) = partial.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let n = samples as f64;
    let mean = sum / n;
    let var = if samples > 1 { ((sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    McEstimate { mean, std_err: (var / n).sqrt(), samples }
}

/// Monte Carlo ergodic rate of user `m` in cluster `k` with its NOMA
/// interference-plus-noise level.
pub fn monte_carlo_rate(net: &Network, power: &PowerAllocation, k: usize, m: usize, samples: usize, seed: u64) -> McEstimate {
    let noise = user_noise(net, power, k, m);
    monte_carlo_link_rate(net, power, noise, k, m, m, samples, seed)
}

/// Derives an independent seed for stream `index` of a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Weighted sum of per-user Monte Carlo rates. `noise_of(k, m)` supplies the
/// interference-plus-noise level for each user and `weight` scales user `m`.
pub fn monte_carlo_sum_with(
    net: &Network,
    power: &PowerAllocation,
    samples: usize,
    seed: u64,
    weights: [f64; 2],
    noise_of: impl Fn(usize, usize) -> f64,
) -> (McEstimate, Vec<[f64; 2]>) {
    let mut mean = 0.0;
    let mut var = 0.0;
    let mut per_user = Vec::with_capacity(net.num_clusters());
    for k in 0..net.num_clusters() {
        let mut row = [0.0; 2];
        for m in 0..2 {
            let s = derive_seed(seed, (2 * k + m) as u64);
            let est = monte_carlo_link_rate(net, power, noise_of(k, m), k, m, m, samples, s);
            row[m] = est.mean;
            mean += weights[m] * est.mean;
            var += (weights[m] * est.std_err).powi(2);
        }
        per_user.push(row);
    }
    (McEstimate { mean, std_err: var.sqrt(), samples }, per_user)
}

/// Monte Carlo NOMA sum rate; per-user streams are independent.
pub fn monte_carlo_sum_rate(net: &Network, power: &PowerAllocation, samples: usize, seed: u64) -> McEstimate {
    monte_carlo_sum_with(net, power, samples, seed, [1.0, 1.0], |k, m| user_noise(net, power, k, m)).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_determinant() {
        let s = DMatrix::<Complex64>::from_element(3, 2, Complex64::new(0.3, -0.2));
        assert_eq!(log2_det_identity_plus(&s, &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn rank_one_determinant() {
        // det(I + d s s^H) = 1 + d |s|^2
        let s = DMatrix::from_column_slice(2, 1, &[Complex64::new(1.0, 1.0), Complex64::new(0.5, 0.0)]);
        let expected = (1.0 + 3.0 * 2.25f64).log2();
        assert!((log2_det_identity_plus(&s, &[3.0]) - expected).abs() < 1e-12);
    }

    #[test]
    fn derived_seeds_differ() {
        let a: Vec<u64> = (0..16).map(|i| derive_seed(42, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(a.len(), b.len());
    }
}
