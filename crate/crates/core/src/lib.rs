//! Mixed-precision training emulation for parameterized U-Net nowcasting models.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`] holds the tensor type, software binary16 and the
//!   "binary16 multiply, binary32 accumulate" contract.
//! * [`nn`] implements forward/backward passes for every U-Net layer, the
//!   static layer graph, MSE loss, Adam and a finite-difference checker.
//! * [`model`] builds `U{d}-{f}` graphs and models their parameter, FLOP and
//!   memory cost.
//! * [`amp`] carries the precision policy and dynamic loss scaling.
//! * [`data`] provides the SEQZ sequence format, event windowing, a synthetic
//!   advection generator and batching.
//! * [`metrics`] scores forecasts with contingency tables, MSE and the
//!   persistence baseline.
//! * [`telemetry`] turns power logs and run records into energy, utilization
//!   and speedup tables.
//! * [`train`] runs synchronous data-parallel training and sweeps.
//!
//! Inner loops are data-parallel through rayon when the `parallel` feature is
//! enabled (the default); see [`exec`] for the sequential switch.

pub mod amp;
pub mod data;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod numerics;
pub mod telemetry;
pub mod train;

pub use error::{Error, Result};
