//! Random coastline topologies for convergence studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{Cluster, EnvironmentParams, Position, Topology};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::rates::{sic_cap, user_rate};
use crate::sca::{initial_power, ConstraintSet};

/// Generator bounds. Distances are in metres; `y` is the offshore distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomTopologyParams {
    pub clusters: usize,
    pub tbs_per_cluster: usize,
    pub uavs_per_cluster: usize,
    pub antennas_per_user: usize,
    /// Spacing of the cluster centres along the coast.
    pub cluster_spacing: f64,
    /// Half-width of the along-coast jitter of every node and user.
    pub x_jitter: f64,
    pub near_user_y: (f64, f64),
    pub far_user_y: (f64, f64),
    /// Minimum extra offshore distance of the far user over the near user.
    pub user_margin: f64,
    pub tbs_y: f64,
    pub uav_y: (f64, f64),
    pub satellite_users: usize,
    pub satellite_y: (f64, f64),
    pub max_attempts: usize,
}

impl Default for RandomTopologyParams {
    fn default() -> Self {
        RandomTopologyParams {
            clusters: 3,
            tbs_per_cluster: 1,
            uavs_per_cluster: 2,
            antennas_per_user: 3,
            cluster_spacing: 30_000.0,
            x_jitter: 3_000.0,
            near_user_y: (5_000.0, 20_000.0),
            far_user_y: (40_000.0, 90_000.0),
            user_margin: 20_000.0,
            tbs_y: -500.0,
            uav_y: (15_000.0, 30_000.0),
            satellite_users: 2,
            satellite_y: (15_000.0, 30_000.0),
            max_attempts: 1_000,
        }
    }
}

impl RandomTopologyParams {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        let user_ranges_ok = [self.near_user_y, self.far_user_y]
            .iter()
            .all(|&(lo, hi)| range_ok((lo, hi)) && lo > 0.0 && hi <= 100_000.0);
        if self.clusters == 0 || self.tbs_per_cluster + self.uavs_per_cluster == 0 {
            return Err(Error::Generation("need at least one cluster and one transmitter".into()));
        }
        if !user_ranges_ok || !range_ok(self.uav_y) || !range_ok(self.satellite_y) {
            return Err(Error::Generation("user ranges must lie in (0, 100 km] and all ranges be ordered".into()));
        }
        if self.near_user_y.0 + self.user_margin > self.far_user_y.1 {
            return Err(Error::Generation("far-user range cannot honour the user margin".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::Generation("max_attempts must be positive".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn sample(rng: &mut ChaCha8Rng, params: &RandomTopologyParams, env: &EnvironmentParams) -> Topology {
    let clusters = (0..params.clusters)
        .map(|k| {
            let centre = k as f64 * params.cluster_spacing;
            let jitter = |rng: &mut ChaCha8Rng| centre + uniform(rng, (-params.x_jitter, params.x_jitter));
            let tbs = (0..params.tbs_per_cluster)
                .map(|_| Position::new(jitter(rng), params.tbs_y, env.tbs_height_m))
                .collect();
            let uavs = (0..params.uavs_per_cluster)
                .map(|_| Position::new(jitter(rng), uniform(rng, params.uav_y), env.uav_height_m))
                .collect();
            let y1 = uniform(rng, params.near_user_y);
            let lo2 = params.far_user_y.0.max(y1 + params.user_margin);
            let y2 = uniform(rng, (lo2, params.far_user_y.1));
            Cluster {
                tbs,
                uavs,
                users: [
                    Position::new(jitter(rng), y1, env.user_height_m),
                    Position::new(jitter(rng), y2, env.user_height_m),
                ],
                antennas_per_user: params.antennas_per_user,
            }
        })
        .collect();
    // Satellite users sit in the gaps between cluster centres, or beside
    // the only cluster.
    let satellite_users = (0..params.satellite_users)
        .map(|j| {
            let slots = params.clusters.saturating_sub(1).max(1);
            let x = (j % slots) as f64 * params.cluster_spacing + 0.5 * params.cluster_spacing;
            let x = x + uniform(rng, (-params.x_jitter, params.x_jitter));
            Position::new(x, uniform(rng, params.satellite_y), env.user_height_m)
        })
        .collect();
    Topology { clusters, satellite_users }
}

/// True when every near user can decode its partner's signal at the
/// equal-power start: `sic_cap >= approx_rate(k, 2)`.
pub fn passes_sic_screen(net: &Network, constraints: &ConstraintSet) -> Result<bool> {
    let (power, _) = initial_power(net, constraints)?;
    for k in 0..net.num_clusters() {
        if sic_cap(net, &power, k)? < user_rate(net, &power, k, 1)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A feasibility witness: the leakage-scaled start with every node's power
/// moved to the far user. It meets all caps, so when every far user then
/// reaches its floor the allocation problem is feasible.
pub fn has_qos_witness(net: &Network, constraints: &ConstraintSet) -> Result<bool> {
    let (mut power, _) = initial_power(net, constraints)?;
    for k in 0..net.num_clusters() {
        for n in 0..net.num_nodes(k) {
            power.p[k][1][n] += power.p[k][0][n];
            power.p[k][0][n] = 0.0;
        }
    }
    for k in 0..net.num_clusters() {
        if user_rate(net, &power, k, 1)? < constraints.qos_floor[k] {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Draws topologies from `seed` until one has well-defined link gains,
/// passes the SIC screen and has a QoS feasibility witness.
pub fn random_topology(
    seed: u64,
    params: &RandomTopologyParams,
    env: &EnvironmentParams,
    constraints: &ConstraintSet,
) -> Result<Topology> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..params.max_attempts {
        let topology = sample(&mut rng, params, env);
        // A user almost directly below a UAV has no defined elevation angle.
        let net = match Network::new(topology.clone(), env) {
            Ok(net) => net,
            Err(Error::Domain(_)) => continue,
            Err(e) => return Err(e),
        };
        if passes_sic_screen(&net, constraints)? && has_qos_witness(&net, constraints)? {
            return Ok(topology);
        }
    }
    Err(Error::Generation(format!("no topology passed the screens in {} attempts", params.max_attempts)))
}
