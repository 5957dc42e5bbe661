//! Network geometry and large-scale channel gains.
//!
//! Terrestrial base stations use the Hata model, UAVs use the elevation-angle
//! LOS/NLOS mixture model. Both return a loss in dB that is mapped to a linear
//! power gain with [`db_to_linear`]. Antenna gains are added to the loss
//! expressions exactly as the models are usually printed in this setting,
//! so a positive gain in dBi *increases* the loss; supply a negative value to
//! get the conventional sign.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{Complex, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Complex64 = Complex<f64>;

/// Geometries closer than this are rejected: neither loss model holds in the
/// near field.
pub const MIN_LINK_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    /// Height above sea level.
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Position { x, y, z }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite()) {
            return Err(Error::Topology(format!("non-finite position {self:?}")));
        }
        if self.z < 0.0 {
            return Err(Error::Topology(format!("position below sea level: {self:?}")));
        }
        Ok(())
    }
}

/// Propagation environment. Frequencies are stored in MHz; the UAV model
/// converts to Hz internally so that it is consistent with `light_speed`.
/// Missing fields deserialize to the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentParams {
    pub carrier_freq_mhz: f64,
    /// Environment constant `C` of the Hata model.
    pub hata_env_const_db: f64,
    pub sigmoid_a: f64,
    pub sigmoid_b: f64,
    pub eta_los_db: f64,
    pub eta_nlos_db: f64,
    pub light_speed: f64,
    pub tbs_gain_dbi: f64,
    pub uav_gain_dbi: f64,
    pub tbs_height_m: f64,
    pub uav_height_m: f64,
    pub user_height_m: f64,
    pub noise_power_dbm: f64,
}

impl Default for EnvironmentParams {
    fn default() -> Self {
        EnvironmentParams {
            carrier_freq_mhz: 2000.0,
            hata_env_const_db: 1.0,
            sigmoid_a: 5.0188,
            sigmoid_b: 0.3511,
            eta_los_db: 0.1,
            eta_nlos_db: 21.0,
            light_speed: 3.0e8,
            tbs_gain_dbi: 30.0,
            uav_gain_dbi: 10.0,
            tbs_height_m: 200.0,
            uav_height_m: 800.0,
            user_height_m: 5.0,
            noise_power_dbm: -107.0,
        }
    }
}

impl EnvironmentParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq_mhz", self.carrier_freq_mhz),
            ("light_speed", self.light_speed),
            ("tbs_height_m", self.tbs_height_m),
            ("uav_height_m", self.uav_height_m),
            ("user_height_m", self.user_height_m),
            ("sigmoid_b", self.sigmoid_b),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {value}")));
            }
        }
        if !self.noise_power_dbm.is_finite() {
            return Err(Error::Domain("noise_power_dbm must be finite".into()));
        }
        Ok(())
    }

    /// Receiver noise power in watts.
    pub fn noise_watts(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Hata loss of a TBS link in dB.
pub fn hata_path_loss_db(distance: f64, env: &EnvironmentParams) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::Domain(format!("TBS link distance must be positive, got {distance}")));
    }
    let ht = env.tbs_height_m;
    let hr = env.user_height_m;
    let loss = env.tbs_gain_dbi
        + (44.9 - 6.55 * ht.log10()) * (distance / 1000.0).log10()
        + (35.46 - 1.1 * hr) * env.carrier_freq_mhz.log10()
        - 13.82 * hr.log10()
        + 0.7 * hr
        + env.hata_env_const_db
        + 45.5;
    Ok(loss)
}

/// Elevation angle in degrees seen from a user at `distance` from a UAV.
pub fn elevation_deg(distance: f64, env: &EnvironmentParams) -> Result<f64> {
    if !(distance > 0.0) || distance < env.uav_height_m {
        return Err(Error::Domain(format!(
            "UAV link distance {distance} m is below the UAV height {} m",
            env.uav_height_m
        )));
    }
    let ratio = (env.uav_height_m / distance).min(1.0);
    Ok(ratio.asin().to_degrees())
}

/// LOS/NLOS mixture loss of a UAV link in dB.
pub fn uav_path_loss_db(distance: f64, env: &EnvironmentParams) -> Result<f64> {
    let rho = elevation_deg(distance, env)?;
    let excess = env.eta_los_db - env.eta_nlos_db;
    let freq_hz = env.carrier_freq_mhz * 1e6;
    let free_space = 20.0 * distance.log10()
        + 20.0 * (4.0 * PI * freq_hz / env.light_speed).log10()
        + env.eta_nlos_db;
    let los_weight = 1.0 / (1.0 + env.sigmoid_a * (-env.sigmoid_b * (rho - env.sigmoid_a)).exp());
    Ok(env.uav_gain_dbi + excess * los_weight + free_space)
}

pub fn db_to_linear(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Tbs,
    Uav,
}

/// A virtual cluster: `T_k` TBSs and `U_k` UAVs jointly serving one NOMA
/// pair. User 0 is the near user that performs SIC; user 1 is the far user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cluster {
    #[serde(default)]
    pub tbs: Vec<Position>,
    #[serde(default)]
    pub uavs: Vec<Position>,
    pub users: [Position; 2],
    pub antennas_per_user: usize,
}

impl Cluster {
    /// Number of transmitters `T_k + U_k`.
    pub fn num_nodes(&self) -> usize {
        self.tbs.len() + self.uavs.len()
    }

    /// Transmitters are ordered TBSs first, then UAVs.
    pub fn node_kind(&self, n: usize) -> NodeKind {
        if n < self.tbs.len() {
            NodeKind::Tbs
        } else {
            NodeKind::Uav
        }
    }

    pub fn node_position(&self, n: usize) -> &Position {
        if n < self.tbs.len() {
            &self.tbs[n]
        } else {
            &self.uavs[n - self.tbs.len()]
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeKind, &Position)> {
        self.tbs
            .iter()
            .map(|p| (NodeKind::Tbs, p))
            .chain(self.uavs.iter().map(|p| (NodeKind::Uav, p)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub clusters: Vec<Cluster>,
    #[serde(default)]
    pub satellite_users: Vec<Position>,
}

impl Topology {
    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters.is_empty() {
            return Err(Error::Topology("at least one cluster is required".into()));
        }
        for (k, c) in self.clusters.iter().enumerate() {
            if c.num_nodes() == 0 {
                return Err(Error::Topology(format!("cluster {k} has no transmitters")));
            }
            if c.antennas_per_user == 0 {
                return Err(Error::Topology(format!("cluster {k} has zero receive antennas")));
            }
            for p in c.tbs.iter().chain(&c.uavs).chain(&c.users) {
                p.validate()?;
            }
        }
        for p in &self.satellite_users {
            p.validate()?;
        }
        Ok(())
    }

    /// Clusters violating `M_k >= T_k + U_k`, the condition under which the
    /// auxiliary QoS function is monotone.
    pub fn check_antenna_condition(&self) -> Result<()> {
        for (k, c) in self.clusters.iter().enumerate() {
            if c.antennas_per_user < c.num_nodes() {
                return Err(Error::Topology(format!(
                    "cluster {k}: {} antennas per user < {} transmitters",
                    c.antennas_per_user,
                    c.num_nodes()
                )));
            }
        }
        Ok(())
    }

    /// Rebuilds every cluster with the same transmitter sites, the last `uavs`
    /// of which become UAVs and the rest TBSs. Heights follow the node kind.
    pub fn with_uav_count(&self, uavs: usize, env: &EnvironmentParams) -> Topology {
        let clusters = self
            .clusters
            .iter()
            .map(|c| {
                let sites: Vec<Position> = c.nodes().map(|(_, p)| *p).collect();
                let split = sites.len().saturating_sub(uavs);
                Cluster {
                    tbs: sites[..split]
                        .iter()
                        .map(|p| Position::new(p.x, p.y, env.tbs_height_m))
                        .collect(),
                    uavs: sites[split..]
                        .iter()
                        .map(|p| Position::new(p.x, p.y, env.uav_height_m))
                        .collect(),
                    users: c.users,
                    antennas_per_user: c.antennas_per_user,
                }
            })
            .collect();
        Topology { clusters, satellite_users: self.satellite_users.clone() }
    }
}

/// Large-scale gain of a single link given the transmitter kind.
pub fn link_gain(kind: NodeKind, tx: &Position, rx: &Position, env: &EnvironmentParams) -> Result<f64> {
    let d = tx.distance(rx);
    if d < MIN_LINK_DISTANCE_M {
        return Err(Error::Domain(format!("link distance {d} m below {MIN_LINK_DISTANCE_M} m")));
    }
    let loss = match kind {
        NodeKind::Tbs => hata_path_loss_db(d, env)?,
        NodeKind::Uav => uav_path_loss_db(d, env)?,
    };
    Ok(db_to_linear(loss))
}

/// Linear large-scale gains between every transmitter and every user.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScaleGains {
    /// `user[k][i][m][n]`: gain from transmitter `n` of cluster `i` to user
    /// `m` of cluster `k`.
    pub user: Vec<Vec<[Vec<f64>; 2]>>,
    /// `sat[j][k][n]`: gain from transmitter `n` of cluster `k` to satellite
    /// user `j`.
    pub sat: Vec<Vec<Vec<f64>>>,
}

impl LargeScaleGains {
    #[inline]
    pub fn user(&self, k: usize, m: usize, i: usize, n: usize) -> f64 {
        self.user[k][i][m][n]
    }

    #[inline]
    pub fn sat(&self, j: usize, k: usize, n: usize) -> f64 {
        self.sat[j][k][n]
    }

    pub fn num_clusters(&self) -> usize {
        self.user.len()
    }

    pub fn num_sat_users(&self) -> usize {
        self.sat.len()
    }
}

pub fn build_gains(topology: &Topology, env: &EnvironmentParams) -> Result<LargeScaleGains> {
    topology.validate()?;
    env.validate()?;
    let mut user = Vec::with_capacity(topology.num_clusters());
    for rx_cluster in &topology.clusters {
        let mut row = Vec::with_capacity(topology.num_clusters());
        for tx_cluster in &topology.clusters {
            let mut per_user: [Vec<f64>; 2] = Default::default();
            for (m, rx) in rx_cluster.users.iter().enumerate() {
                per_user[m] = tx_cluster
                    .nodes()
                    .map(|(kind, tx)| link_gain(kind, tx, rx, env))
                    .collect::<Result<_>>()?;
            }
            row.push(per_user);
        }
        user.push(row);
    }
    let sat = topology
        .satellite_users
        .iter()
        .map(|rx| {
            topology
                .clusters
                .iter()
                .map(|c| c.nodes().map(|(kind, tx)| link_gain(kind, tx, rx, env)).collect())
                .collect::<Result<Vec<Vec<f64>>>>()
        })
        .collect::<Result<_>>()?;
    Ok(LargeScaleGains { user, sat })
}

/// Draws one matrix with i.i.d. `CN(0, 1)` entries.
pub fn complex_gaussian_matrix<R: rand::Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
    })
}

/// One realization of the small-scale fading for every cluster pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallScaleSample {
    /// `s[k][i][m]` has shape `M_k x (T_i + U_i)`.
    pub s: Vec<Vec<[DMatrix<Complex64>; 2]>>,
}

pub fn sample_small_scale(topology: &Topology, seed: u64) -> SmallScaleSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = topology
        .clusters
        .iter()
        .map(|rx| {
            topology
                .clusters
                .iter()
                .map(|tx| {
                    let rows = rx.antennas_per_user;
                    let cols = tx.num_nodes();
                    [
                        complex_gaussian_matrix(&mut rng, rows, cols),
                        complex_gaussian_matrix(&mut rng, rows, cols),
                    ]
                })
                .collect()
        })
        .collect();
    SmallScaleSample { s }
}
