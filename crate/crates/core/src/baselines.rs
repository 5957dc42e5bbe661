//! Reference allocators: the equal-power NOMA split and orthogonal-access
//! variants in which the two users of a cluster occupy separate resources.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::allocation::PowerAllocation;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::rates::{approx_rate, inter_cluster_interference};
use crate::sca::{self, AccessScheme, ConstraintSet, OptimizerOptions, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    EqualPowerNoma,
    OmaEqual,
    OmaSca,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::EqualPowerNoma, BaselineKind::OmaEqual, BaselineKind::OmaSca];

    pub fn tag(self) -> &'static str {
        match self {
            BaselineKind::EqualPowerNoma => "equal_power_noma",
            BaselineKind::OmaEqual => "oma_equal",
            BaselineKind::OmaSca => "oma_sca",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|b| b.tag() == s)
            .ok_or_else(|| Error::Domain(format!("unknown baseline '{s}'")))
    }
}

/// The optimizer's starting allocation: leakage-scaled equal budgets, node
/// caps, half of each node's power to each user.
pub fn equal_power(net: &Network, constraints: &ConstraintSet) -> Result<PowerAllocation> {
    Ok(sca::initial_power(net, constraints)?.0)
}

fn check_split(split: f64) -> Result<()> {
    if (0.0..=1.0).contains(&split) {
        Ok(())
    } else {
        Err(Error::Domain(format!("orthogonal split must lie in [0, 1], got {split}")))
    }
}

/// Interference plus noise of user `m` under orthogonal access: only other
/// clusters interfere.
pub fn oma_noise(net: &Network, power: &PowerAllocation, k: usize, m: usize) -> f64 {
    inter_cluster_interference(net, power, k, m) + net.noise_w
}

/// Unweighted per-user rates `[k][m]` on orthogonal resources.
pub fn oma_user_rates(net: &Network, power: &PowerAllocation) -> Result<Vec<[f64; 2]>> {
    (0..net.num_clusters())
        .map(|k| {
            Ok([
                approx_rate(net, power, oma_noise(net, power, k, 0), k, 0)?,
                approx_rate(net, power, oma_noise(net, power, k, 1), k, 1)?,
            ])
        })
        .collect()
}

/// `sum_k split g_{k,1} + (1 - split) g_{k,2}` with intra-cluster
/// interference removed.
pub fn oma_rate(net: &Network, power: &PowerAllocation, split: f64) -> Result<f64> {
    check_split(split)?;
    Ok(oma_user_rates(net, power)?.iter().map(|r| split * r[0] + (1.0 - split) * r[1]).sum())
}

/// Runs the optimizer on the orthogonal problem. The far user's floor applies
/// to its weighted rate, so the unweighted floor becomes `r / (1 - split)`.
pub fn oma_sca(net: &Network, constraints: &ConstraintSet, split: f64, options: &OptimizerOptions) -> Result<OptimizerState> {
    sca::run_with(net, constraints, AccessScheme::Orthogonal { split }, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{approx_sum_rate, tests::toy_network};

    #[test]
    fn tags_round_trip() {
        for b in BaselineKind::ALL {
            assert_eq!(b.tag().parse::<BaselineKind>().unwrap(), b);
        }
        assert!("sca".parse::<BaselineKind>().is_err());
    }

    #[test]
    fn split_extremes() {
        let net = toy_network(2, 1, 2, 1e-12, 1e-13);
        let p = PowerAllocation::uniform(&net.topology, 3.0);
        let rates = oma_user_rates(&net, &p).unwrap();
        let only_first: f64 = rates.iter().map(|r| r[0]).sum();
        assert!((oma_rate(&net, &p, 1.0).unwrap() - only_first).abs() < 1e-12);
        assert_eq!(oma_rate(&net, &PowerAllocation::zeros(&net.topology), 0.5).unwrap(), 0.0);
        assert!(oma_rate(&net, &p, 1.5).is_err());
    }

    #[test]
    fn relabeling_symmetry() {
        let mut net = toy_network(1, 1, 1, 1e-12, 1e-13);
        net.gains.user[0][0][0][0] = 4e-12;
        let mut p = PowerAllocation::zeros(&net.topology);
        p.p[0][0][0] = 2.0;
        p.p[0][1][0] = 7.0;
        let mut swapped_net = net.clone();
        swapped_net.gains.user[0][0].swap(0, 1);
        let mut q = p.clone();
        q.p[0].swap(0, 1);
        let a = oma_rate(&net, &p, 0.3).unwrap();
        let b = oma_rate(&swapped_net, &q, 0.7).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn half_split_oma_below_noma_on_equal_gains() {
        let net = toy_network(1, 1, 1, 1e-12, 1e-13);
        let p = PowerAllocation::uniform(&net.topology, 5.0);
        // The equal-gain toy: OMA halves each user's share.
        assert!(oma_rate(&net, &p, 0.5).unwrap() <= approx_sum_rate(&net, &p).unwrap() + 1e-12);
    }
}
