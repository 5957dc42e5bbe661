//! TOML scenario files.
//!
//! Powers are in watts, the leakage cap in dBm, coordinates in metres with
//! `y > 0` pointing out to sea.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineKind;
use crate::channel::{dbm_to_watts, Cluster, EnvironmentParams, Position, Topology};
use crate::error::{Error, Result};
use crate::sca::ConstraintSet;
use crate::scenario::random::RandomTopologyParams;

/// A far-user floor shared by all clusters or given per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QosFloor {
    Uniform(f64),
    PerCluster(Vec<f64>),
}

impl QosFloor {
    pub fn expand(&self, num_clusters: usize) -> Vec<f64> {
        match self {
            QosFloor::Uniform(r) => vec![*r; num_clusters],
            QosFloor::PerCluster(r) => r.clone(),
        }
    }
}

fn default_epsilon() -> f64 {
    ConstraintSet::DEFAULT_EPSILON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub p_max_w: f64,
    pub p_tbs_max_w: f64,
    pub p_uav_max_w: f64,
    pub leakage_cap_dbm: f64,
    pub qos_floor: QosFloor,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_epsilon")]
    pub init_step: f64,
}

impl ConstraintConfig {
    pub fn to_constraint_set(&self, num_clusters: usize) -> ConstraintSet {
        ConstraintSet {
            p_max: self.p_max_w,
            p_tbs_max: self.p_tbs_max_w,
            p_uav_max: self.p_uav_max_w,
            leakage_cap: dbm_to_watts(self.leakage_cap_dbm),
            qos_floor: self.qos_floor.expand(num_clusters),
            epsilon: self.epsilon,
            init_step: self.init_step,
        }
    }
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        ConstraintConfig {
            p_max_w: ConstraintSet::DEFAULT_P_MAX_W,
            p_tbs_max_w: ConstraintSet::DEFAULT_P_TBS_MAX_W,
            p_uav_max_w: ConstraintSet::DEFAULT_P_UAV_MAX_W,
            leakage_cap_dbm: ConstraintSet::DEFAULT_LEAKAGE_CAP_DBM,
            qos_floor: QosFloor::Uniform(ConstraintSet::DEFAULT_QOS_FLOOR),
            epsilon: ConstraintSet::DEFAULT_EPSILON,
            init_step: ConstraintSet::DEFAULT_EPSILON,
        }
    }
}

/// Allocation schemes a run can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ScaNoma,
    EqualPowerNoma,
    OmaEqual,
    OmaSca,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::ScaNoma, Scheme::EqualPowerNoma, Scheme::OmaEqual, Scheme::OmaSca];

    pub fn tag(self) -> &'static str {
        match self {
            Scheme::ScaNoma => "sca_noma",
            Scheme::EqualPowerNoma => BaselineKind::EqualPowerNoma.tag(),
            Scheme::OmaEqual => BaselineKind::OmaEqual.tag(),
            Scheme::OmaSca => BaselineKind::OmaSca.tag(),
        }
    }

    pub fn is_orthogonal(self) -> bool {
        matches!(self, Scheme::OmaEqual | Scheme::OmaSca)
    }
}

impl From<BaselineKind> for Scheme {
    fn from(b: BaselineKind) -> Self {
        match b {
            BaselineKind::EqualPowerNoma => Scheme::EqualPowerNoma,
            BaselineKind::OmaEqual => Scheme::OmaEqual,
            BaselineKind::OmaSca => Scheme::OmaSca,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|b| b.tag() == s)
            .ok_or_else(|| Error::Domain(format!("unknown scheme '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Cluster budget in W.
    PMax,
    /// Far-user floor in bits/s/Hz, applied to every cluster.
    QosFloor,
    /// Leakage cap in dBm.
    LeakageCap,
    /// Number of transmitter sites per cluster turned into UAVs.
    TbsUavMix,
}

impl SweepAxis {
    pub fn tag(self) -> &'static str {
        match self {
            SweepAxis::PMax => "p_max",
            SweepAxis::QosFloor => "qos_floor",
            SweepAxis::LeakageCap => "leakage_cap",
            SweepAxis::TbsUavMix => "tbs_uav_mix",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepAxis::PMax, SweepAxis::QosFloor, SweepAxis::LeakageCap, SweepAxis::TbsUavMix]
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::Domain(format!("unknown sweep axis '{s}'")))
    }
}

/// Where each repetition's topology comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologySource {
    /// The clusters of the scenario file; repetitions only reseed Monte Carlo.
    #[default]
    Config,
    /// A fresh random topology per repetition.
    Random,
}

fn one() -> usize {
    1
}

fn all_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub topology: TopologySource,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, values: Vec<f64>) -> Self {
        SweepSpec { axis, values, repetitions: 1, seed: 0, schemes: all_schemes(), topology: TopologySource::Config }
    }

    pub fn validate(&self, topology: &Topology) -> Result<()> {
        let err = |field: &str, message: String| Error::Config { path: format!("sweep.{field}"), message };
        if self.values.is_empty() {
            return Err(err("values", "must not be empty".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(err("values", "must be finite".into()));
        }
        let increasing = self.values.windows(2).all(|w| w[1] > w[0]);
        let decreasing = self.values.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            return Err(err("values", "must be strictly monotone".into()));
        }
        if self.repetitions == 0 {
            return Err(err("repetitions", "must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(err("schemes", "must not be empty".into()));
        }
        for &v in &self.values {
            let ok = match self.axis {
                SweepAxis::PMax => v > 0.0,
                SweepAxis::QosFloor => v >= 0.0,
                SweepAxis::LeakageCap => true,
                SweepAxis::TbsUavMix => {
                    let sites = topology.clusters.iter().map(Cluster::num_nodes).min().unwrap_or(0);
                    v >= 0.0 && v.fract() == 0.0 && v as usize <= sites
                }
            };
            if !ok {
                return Err(err("values", format!("{v} is out of range for axis {}", self.axis)));
            }
        }
        Ok(())
    }
}

fn default_mc_samples() -> usize {
    10_000
}

fn default_split() -> f64 {
    0.5
}

/// Largest seed a scenario file can hold, since TOML integers are signed.
pub const MAX_SEED: u64 = i64::MAX as u64;

fn default_max_iterations() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    /// Master seed; the `NOMA_SEED` variable and `--seed` flag override it.
    #[serde(default)]
    pub seed: u64,
    /// Resource share of user 1 under orthogonal access.
    #[serde(default = "default_split")]
    pub oma_split: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            mc_samples: default_mc_samples(),
            seed: 0,
            oma_split: default_split(),
            max_iterations: default_max_iterations(),
        }
    }
}

fn default_name() -> String {
    "default".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub environment: EnvironmentParams,
    pub constraints: ConstraintConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    /// Generator bounds for random-topology repetitions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomTopologyParams>,
    #[serde(default)]
    pub satellite_users: Vec<Position>,
    pub clusters: Vec<Cluster>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Panics if a seed exceeds [`MAX_SEED`]; validated configs never do.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable as TOML")
    }

    pub fn topology(&self) -> Topology {
        Topology { clusters: self.clusters.clone(), satellite_users: self.satellite_users.clone() }
    }

    pub fn constraint_set(&self) -> ConstraintSet {
        self.constraints.to_constraint_set(self.clusters.len())
    }

    pub fn parts(&self) -> (Topology, EnvironmentParams, ConstraintSet) {
        (self.topology(), self.environment.clone(), self.constraint_set())
    }

    /// Semantic checks beyond the schema; errors carry the offending key.
    pub fn validate(&self) -> Result<()> {
        let at = |path: &str| {
            let path = path.to_string();
            move |e: Error| Error::Config { path: path.clone(), message: e.to_string() }
        };
        self.environment.validate().map_err(at("environment"))?;
        let topology = self.topology();
        topology.validate().map_err(at("clusters"))?;
        if let QosFloor::PerCluster(r) = &self.constraints.qos_floor {
            if r.len() != self.clusters.len() {
                return Err(Error::Config {
                    path: "constraints.qos_floor".into(),
                    message: format!("{} entries for {} clusters", r.len(), self.clusters.len()),
                });
            }
        }
        if !self.constraints.leakage_cap_dbm.is_finite() {
            return Err(Error::Config { path: "constraints.leakage_cap_dbm".into(), message: "must be finite".into() });
        }
        self.constraint_set().validate(self.clusters.len()).map_err(at("constraints"))?;
        if self.simulation.mc_samples == 0 {
            return Err(Error::Config { path: "simulation.mc_samples".into(), message: "must be at least 1".into() });
        }
        if !(0.0..=1.0).contains(&self.simulation.oma_split) {
            return Err(Error::Config { path: "simulation.oma_split".into(), message: "must lie in [0, 1]".into() });
        }
        if self.simulation.max_iterations == 0 {
            return Err(Error::Config { path: "simulation.max_iterations".into(), message: "must be at least 1".into() });
        }
        let seeds = [("simulation.seed", Some(self.simulation.seed)), ("sweep.seed", self.sweep.as_ref().map(|s| s.seed))];
        for (path, seed) in seeds {
            if seed.is_some_and(|s| s > MAX_SEED) {
                return Err(Error::Config { path: path.into(), message: format!("must not exceed {MAX_SEED}") });
            }
        }
        if let Some(random) = &self.random {
            random.validate().map_err(at("random"))?;
        }
        if let Some(sweep) = &self.sweep {
            sweep.validate(&topology)?;
        }
        Ok(())
    }
}

/// Parses and validates a scenario file.
pub fn load_config(path: impl AsRef<Path>) -> Result<(Topology, EnvironmentParams, ConstraintSet)> {
    Ok(ScenarioConfig::load(path)?.parts())
}

/// The shipped three-cluster coastline scenario: clusters every 30 km, TBSs
/// on shore, UAVs 22 km out, near users 12 km and far users 40 km offshore,
/// two satellite users between the clusters.
pub fn default_scenario() -> ScenarioConfig {
    let env = EnvironmentParams::default();
    let centres = [0.0, 30_000.0, 60_000.0];
    let tbs_count = [2usize, 1, 2];
    let uav_count = [1usize, 2, 1];
    let clusters = centres
        .iter()
        .zip(tbs_count.iter().zip(&uav_count))
        .map(|(&x, (&t, &u))| Cluster {
            tbs: (0..t)
                .map(|n| Position::new(x - 3_000.0 * (t as f64 - 1.0) + 6_000.0 * n as f64, -500.0, env.tbs_height_m))
                .collect(),
            uavs: (0..u)
                .map(|n| Position::new(x - 2_000.0 * (u as f64 - 1.0) + 4_000.0 * n as f64, 22_000.0, env.uav_height_m))
                .collect(),
            users: [Position::new(x, 12_000.0, env.user_height_m), Position::new(x, 40_000.0, env.user_height_m)],
            antennas_per_user: 3,
        })
        .collect();
    ScenarioConfig {
        name: default_name(),
        simulation: SimulationConfig::default(),
        environment: env.clone(),
        constraints: ConstraintConfig::default(),
        sweep: None,
        random: None,
        satellite_users: vec![
            Position::new(17_000.0, 20_000.0, env.user_height_m),
            Position::new(43_000.0, 20_000.0, env.user_height_m),
        ],
        clusters,
    }
}
