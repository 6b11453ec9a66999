//! Learning to stabilize an unknown, partially observable, unstable
//! discrete-time LTI system from input/output rollouts.
//!
//! The pipeline only identifies the unstable part of the plant: Markov
//! parameters are fitted by least squares, assembled into a lifted Hankel
//! matrix whose offset suppresses the stable modes, truncated to rank `k`,
//! and realized as a `k`-state model. A robust output-feedback controller
//! is then designed for that model and certified with the small-gain
//! condition against the neglected stable remainder.

// `!(x < y)` is used on purpose so that NaN fails range checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod control;
pub mod error;
pub mod lti;
pub mod numerics;
pub mod seeds;
pub mod sysid;

pub use error::{Error, Result};
