//! Lagrangian flow-map schemes for Wasserstein gradient flows.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod exact;
pub mod grid;
pub mod output;
pub mod presets;
pub mod scheme1d;
pub mod scheme2d;
pub mod simulation;
pub mod solver;

pub use error::{Error, Result};
