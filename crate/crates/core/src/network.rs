use crate::channel::{build_gains, EnvironmentParams, LargeScaleGains, Topology};
use crate::error::{Error, Result};

/// A topology together with its large-scale gains and receiver noise floor.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub topology: Topology,
    pub gains: LargeScaleGains,
    /// Noise power `sigma^2` in watts.
    pub noise_w: f64,
}

impl Network {
    pub fn new(topology: Topology, env: &EnvironmentParams) -> Result<Self> {
        let gains = build_gains(&topology, env)?;
        Ok(Network { topology, gains, noise_w: env.noise_watts() })
    }

    /// Wraps hand-built gains; shapes are checked against the topology.
    pub fn from_gains(topology: Topology, gains: LargeScaleGains, noise_w: f64) -> Result<Self> {
        topology.validate()?;
        let k = topology.num_clusters();
        if !(noise_w > 0.0) {
            return Err(Error::Domain(format!("noise power must be positive, got {noise_w}")));
        }
        let shape_ok = gains.user.len() == k
            && gains.user.iter().all(|row| {
                row.len() == k
                    && row
                        .iter()
                        .zip(&topology.clusters)
                        .all(|(g, c)| g[0].len() == c.num_nodes() && g[1].len() == c.num_nodes())
            })
            && gains.sat.len() == topology.satellite_users.len()
            && gains
                .sat
                .iter()
                .all(|row| row.len() == k && row.iter().zip(&topology.clusters).all(|(g, c)| g.len() == c.num_nodes()));
        if !shape_ok {
            return Err(Error::Topology("gain table shape does not match topology".into()));
        }
        Ok(Network { topology, gains, noise_w })
    }

    pub fn num_clusters(&self) -> usize {
        self.topology.num_clusters()
    }

    pub fn num_nodes(&self, k: usize) -> usize {
        self.topology.clusters[k].num_nodes()
    }

    pub fn antennas(&self, k: usize) -> usize {
        self.topology.clusters[k].antennas_per_user
    }

    pub fn num_sat_users(&self) -> usize {
        self.topology.satellite_users.len()
    }
}
