//! Deterministic cloth-manipulation simulator and benchmark harness for a
//! gripper-on-gripper end effector: a width-controlled pair of finger
//! grippers whose contact switches between a sliding roller and a firm pad.

// `!(x > 0.0)` guards are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cloth;
pub mod error;
pub mod geom;
pub mod gripper;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod percept;
pub mod planner;

pub use error::{Error, Result};
