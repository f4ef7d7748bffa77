//! Safety-aware infinite-horizon optimal control on control-affine plants.
//!
//! Barrier-Lyapunov safeguarding is embedded in an extended state that also
//! carries an adaptive multiplier; a tangential excitation channel breaks
//! local traps, and a quadratic critic trained by concurrent-learning least
//! squares supplies the nominal policy and the worst-case disturbance.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod critic;
pub mod error;
pub mod excitation;
pub mod plants;
pub mod safeguard;
pub mod safesets;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
