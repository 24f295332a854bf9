//! Decentralized observation tasking for local satellite catalog maintenance.
//!
//! Agents on natural motion trajectories point limited field-of-view
//! line-of-sight sensors at uncontrolled bodies, share measurements, and
//! decide when and where to switch targets. The crate holds the dynamics,
//! estimator, scoring, allocator, and the seeded simulation harness.

// `!(x > 0.0)` style checks reject NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod attitude;
pub mod error;
pub mod estimation;
pub mod math;
pub mod orbit;
pub mod sensor;
pub mod sim;
pub mod tasking;

pub use error::{Error, Result};
pub use orbit::{HillState, MeanMotion};
