//! Verification laboratory for the join-the-shortest-queue many-server model
//! in the Halfin-Whitt regime.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acceptance;
pub mod diffusion_sim;
pub mod error;
pub mod fluid_model;
pub mod grid;
pub mod jsq_ctmc;
pub mod lyapunov_drift;
pub mod quadrature;
pub mod registry;
pub mod report;
pub mod special_fn;
pub mod stats;
pub mod stein_solutions;

pub use error::{JsqError, Result};
