//! Multi-level single-server queue lab: exact simulation of the pre-limit
//! queue, its heavy-traffic limit law, the limiting reflected diffusion and
//! executable stationary identities.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod des;
pub mod distributions;
pub mod error;
pub mod limit;
pub mod model;
pub mod orchestrate;
pub mod quad;
pub mod sde;
pub mod stats;
pub mod verify;

pub use config::LabConfig;
pub use des::{
    run_replicas, run_stationary, EventLog, PalmEstimates, QueueState, RunSettings,
    StationaryOutput,
};
pub use distributions::{RenewalSpec, RngStream, StreamPurpose};
pub use error::{Error, Result};
pub use limit::{GibbsDensity, LimitCoefficients, LimitDistribution};
pub use model::{
    HeavyTrafficModel, HeavyTrafficParams, LevelPartition, PrelimitConfig, StepFunction,
};
pub use orchestrate::{run_sweep, SweepPlan, SweepResult};
pub use sde::{DiffusionParams, DiffusionPath};
pub use stats::{EmpiricalDistribution, Estimate, LatticeAccumulator};
