//! Voltage risk assessment and management for radial distribution feeders
//! driven by probabilistic predictions of uncertain voltage components.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod grid_model;
pub mod io;
pub mod manage;
pub mod pipeline;
pub mod risk;
pub mod synth;
pub mod uvc;
pub mod validate;

pub use error::{CoreError, Result};
