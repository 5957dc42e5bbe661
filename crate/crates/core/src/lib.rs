//! Power allocation for NOMA nearshore networks that share spectrum with
//! maritime satellite users.
//!
//! The crate covers the channel model, the closed-form ergodic-rate
//! approximation with its Monte Carlo check, the successive convex
//! approximation optimizer, reference allocators and the scenario runner.

pub mod allocation;
pub mod baselines;
pub mod channel;
pub mod error;
pub mod montecarlo;
pub mod network;
pub mod rates;
pub mod sca;
pub mod scenario;

pub use allocation::{PowerAllocation, PowerLayout};
pub use channel::{Cluster, EnvironmentParams, LargeScaleGains, NodeKind, Position, Topology};
pub use error::{ConstraintId, Error, Result};
pub use network::Network;
pub use rates::{AuxVariables, FixedPointResult, NoiseBreakdown};
pub use sca::{AccessScheme, ConstraintSet, LinearizationPoint, OptimizerOptions, OptimizerState, TraceRecord};
pub use scenario::{RunRecord, ScenarioConfig, Scheme, SweepAxis, SweepSpec};
