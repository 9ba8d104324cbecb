//! Percent comparisons used in timing and energy tables.

use crate::error::{Error, Result};

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::contract(format!("{name} must be positive, got {v}")))
    }
}

/// `100·(t_fp32 − t_amp) / t_fp32`: share of FP32 time saved.
pub fn percent_reduction(t_fp32: f64, t_amp: f64) -> Result<f64> {
    positive("FP32 time", t_fp32)?;
    positive("AMP time", t_amp)?;
    Ok(100.0 * (t_fp32 - t_amp) / t_fp32)
}

/// `100·(t_fp32 / t_amp − 1)`: throughput gain.
pub fn speedup_ratio_pct(t_fp32: f64, t_amp: f64) -> Result<f64> {
    positive("FP32 time", t_fp32)?;
    positive("AMP time", t_amp)?;
    Ok(100.0 * (t_fp32 / t_amp - 1.0))
}

pub fn relative_increase_pct(value: f64, baseline: f64) -> Result<f64> {
    positive("baseline", baseline)?;
    Ok(100.0 * (value / baseline - 1.0))
}

pub fn energy_reduction_pct(e_fp32: f64, e_amp: f64) -> Result<f64> {
    positive("FP32 energy", e_fp32)?;
    Ok(100.0 * (e_fp32 - e_amp) / e_fp32)
}
