use std::path::Path;

use crate::error::{Error, Result};

pub const POWER_LOG_HEADER: [&str; 4] = ["timestamp_ms", "power_w", "sm_util_pct", "mem_util_pct"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSample {
    pub timestamp_ms: f64,
    pub power_w: f64,
    pub sm_util: f64,
    pub mem_util: f64,
}

pub fn parse_power_log(path: impl AsRef<Path>) -> Result<Vec<PowerSample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_power_csv(&text, path)
}

/// Parses log text; `origin` only labels error messages.
pub fn parse_power_csv(text: &str, origin: &Path) -> Result<Vec<PowerSample>> {
    let err = |line: u64, msg: String| Error::Csv {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| err(1, e.to_string()))?,
        None => return Err(err(1, "empty power log".into())),
    };
    if header.iter().map(str::trim).ne(POWER_LOG_HEADER) {
        return Err(err(
            1,
            format!(
                "header must be `{}`, found `{}`",
                POWER_LOG_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != 4 {
            return Err(err(line, format!("expected 4 fields, found {}", rec.len())));
        }
        let field = |i: usize| -> Result<f64> {
            let raw = rec[i].trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(line, format!("{}: not a number: {raw:?}", POWER_LOG_HEADER[i])))
        };
        let s = PowerSample {
            timestamp_ms: field(0)?,
            power_w: field(1)?,
            sm_util: field(2)?,
            mem_util: field(3)?,
        };
        if s.power_w < 0.0 {
            return Err(err(line, format!("negative power {}", s.power_w)));
        }
        for (name, v) in [("sm_util_pct", s.sm_util), ("mem_util_pct", s.mem_util)] {
            if !(0.0..=100.0).contains(&v) {
                return Err(err(line, format!("{name} {v} outside [0, 100]")));
            }
        }
        out.push(s);
    }
    out.sort_by(|a, b| a.timestamp_ms.total_cmp(&b.timestamp_ms));
    Ok(out)
}

/// Trapezoidal integral of power over time, in joules.
pub fn integrate_energy(samples: &[PowerSample]) -> f64 {
    samples
        .windows(2)
        .map(|w| (w[1].timestamp_ms - w[0].timestamp_ms) / 1000.0 * (w[0].power_w + w[1].power_w) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilStats {
    pub avg: f64,
    pub max: f64,
}

/// Sample mean and maximum of each utilization series (SM, memory).
pub fn util_stats(samples: &[PowerSample]) -> Result<(UtilStats, UtilStats)> {
    if samples.is_empty() {
        return Err(Error::contract("utilization statistics need at least one sample"));
    }
    let stat = |f: fn(&PowerSample) -> f64| {
        let n = samples.len() as f64;
        UtilStats {
            avg: samples.iter().map(f).sum::<f64>() / n,
            max: samples.iter().map(f).fold(f64::NEG_INFINITY, f64::max),
        }
    };
    Ok((stat(|s| s.sm_util), stat(|s| s.mem_util)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub energy_joules: f64,
    pub avg_sm_util: f64,
    pub max_sm_util: f64,
    pub avg_mem_util: f64,
    pub max_mem_util: f64,
    pub sample_count: usize,
    pub duration_s: f64,
}

pub fn energy_report(samples: &[PowerSample]) -> Result<EnergyReport> {
    let (sm, mem) = util_stats(samples)?;
    Ok(EnergyReport {
        energy_joules: integrate_energy(samples),
        avg_sm_util: sm.avg,
        max_sm_util: sm.max,
        avg_mem_util: mem.avg,
        max_mem_util: mem.max,
        sample_count: samples.len(),
        duration_s: (samples[samples.len() - 1].timestamp_ms - samples[0].timestamp_ms) / 1000.0,
    })
}

/// Energies add across logs (one per device); utilization is pooled over
/// all samples.
pub fn combine_logs(logs: &[Vec<PowerSample>]) -> Result<EnergyReport> {
    let all: Vec<PowerSample> = logs.iter().flatten().copied().collect();
    let mut r = energy_report(&all)?;
    r.energy_joules = logs.iter().map(|l| integrate_energy(l)).sum();
    r.duration_s = logs
        .iter()
        .filter(|l| !l.is_empty())
        .map(|l| (l[l.len() - 1].timestamp_ms - l[0].timestamp_ms) / 1000.0)
        .fold(0.0, f64::max);
    Ok(r)
}
