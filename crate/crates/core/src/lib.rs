//! Finite-key secure rate of four-intensity decoy-state measurement-device-independent
//! QKD with bounded source intensity errors.

pub mod channel_sim;
pub mod error;
pub mod keyrate;
pub mod optimizer;
pub mod source_model;
pub mod stat_bounds;

pub use error::{Error, Infeasibility, Result};
