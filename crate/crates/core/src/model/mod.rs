//! `U{d}-{f}` U-Net configurations: naming, graph construction and cost.

mod build;
mod config;
mod cost;

pub use build::{build, instantiated_param_count};
pub use config::UNetConfig;
pub use cost::{count_flops, count_params, estimate_memory, fits, CostReport, ParamCount};
