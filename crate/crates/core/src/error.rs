use std::fmt;

use crate::sca::OptimizerState;

/// Identifies one constraint of the power allocation problem or of its
/// linearized subproblem. Cluster, transmitter and satellite-user indices are
/// zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintId {
    /// Power variable `P[k][m][n] >= 0`.
    NonNegativePower { cluster: usize, user: usize, node: usize },
    /// Per-node transmit cap (TBS or UAV).
    NodeCap { cluster: usize, node: usize },
    /// Cluster power budget.
    ClusterBudget { cluster: usize },
    /// Leakage into a satellite user.
    SatelliteLeakage { sat_user: usize },
    /// Auxiliary variable `z_k >= 1`.
    AuxZLower { cluster: usize },
    /// Slack variable `t_{k,n} >= 0`.
    AuxTLower { cluster: usize, node: usize },
    /// Slack variable `t_{k,n} <= 1`.
    AuxTUpper { cluster: usize, node: usize },
    /// Linearized QoS floor on the far user.
    QosFloor { cluster: usize },
    /// Linearized bound tying `z_k` to the slack variables.
    InverseBound { cluster: usize },
    /// Linearized coupling between power, `z_k` and `t_{k,n}`.
    SlackCoupling { cluster: usize, node: usize },
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ConstraintId::NonNegativePower { cluster, user, node } => {
                write!(f, "power[{cluster}][{user}][{node}] >= 0")
            }
            ConstraintId::NodeCap { cluster, node } => write!(f, "node cap (cluster {cluster}, node {node})"),
            ConstraintId::ClusterBudget { cluster } => write!(f, "cluster budget (cluster {cluster})"),
            ConstraintId::SatelliteLeakage { sat_user } => write!(f, "satellite leakage (user {sat_user})"),
            ConstraintId::AuxZLower { cluster } => write!(f, "z >= 1 (cluster {cluster})"),
            ConstraintId::AuxTLower { cluster, node } => write!(f, "t >= 0 (cluster {cluster}, node {node})"),
            ConstraintId::AuxTUpper { cluster, node } => write!(f, "t <= 1 (cluster {cluster}, node {node})"),
            ConstraintId::QosFloor { cluster } => write!(f, "QoS floor (cluster {cluster})"),
            ConstraintId::InverseBound { cluster } => write!(f, "z/t inverse bound (cluster {cluster})"),
            ConstraintId::SlackCoupling { cluster, node } => {
                write!(f, "power/slack coupling (cluster {cluster}, node {node})")
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("invalid constraints: {0}")]
    Constraints(String),

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    FixedPoint { iterations: usize, residual: f64, trace: Vec<f64> },

    #[error("subproblem infeasible: {constraint} short by {shortfall:e}")]
    Infeasible { constraint: ConstraintId, shortfall: f64 },

    #[error("numerical failure in subproblem solver: {0}")]
    Numerical(String),

    #[error("optimizer did not converge within {} iterations", .0.iteration)]
    NotConverged(Box<OptimizerState>),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("topology generation failed: {0}")]
    Generation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
