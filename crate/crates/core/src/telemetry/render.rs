use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::amp::PrecisionMode;
use crate::error::{Error, Result};
use crate::model::UNetConfig;

use super::compare::{energy_reduction_pct, percent_reduction, relative_increase_pct, speedup_ratio_pct};
use super::record::RunRecord;

/// FP32 and AMP runs of one model side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRow {
    pub model: String,
    pub fp32: Option<RunRecord>,
    pub amp: Option<RunRecord>,
}

impl PairRow {
    fn both(&self, f: fn(&RunRecord) -> Option<f64>) -> Option<(f64, f64)> {
        Some((f(self.fp32.as_ref()?)?, f(self.amp.as_ref()?)?))
    }

    pub fn energy_reduction_pct(&self) -> Option<f64> {
        self.both(|r| r.energy_j)
            .and_then(|(a, b)| energy_reduction_pct(a, b).ok())
    }

    pub fn percent_reduction(&self) -> Option<f64> {
        self.both(|r| r.mean_epoch_s)
            .and_then(|(a, b)| percent_reduction(a, b).ok())
    }

    pub fn speedup_ratio_pct(&self) -> Option<f64> {
        self.both(|r| r.mean_epoch_s)
            .and_then(|(a, b)| speedup_ratio_pct(a, b).ok())
    }
}

/// One run relative to the baseline run of the same precision.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeRow {
    pub model: String,
    pub batch: u64,
    pub params: Option<u64>,
    pub params_pct: Option<f64>,
    pub epoch_time_pct: Option<f64>,
    pub energy_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub baseline: String,
    pub relative_precision: PrecisionMode,
    pub pairs: Vec<PairRow>,
    pub relative: Vec<RelativeRow>,
}

/// `U{d}-{f}` names order by depth then width; anything else follows by name.
fn model_order(name: &str) -> (u8, usize, usize, String) {
    match name.parse::<UNetConfig>() {
        Ok(c) => (0, c.depth, c.base_filters, String::new()),
        Err(_) => (1, 0, 0, name.to_string()),
    }
}

/// Builds the utilization/energy, speedup and relative-to-baseline tables.
///
/// The relative table uses AMP runs when the baseline has one, else FP32.
/// `params` supplies parameter counts by model name.
pub fn render_report(records: &[RunRecord], baseline: &str, params: &BTreeMap<String, u64>) -> Result<Report> {
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert(r.key()) {
            return Err(Error::contract(format!(
                "duplicate run record for {} {} batch {}",
                r.model,
                r.precision.label(),
                r.batch
            )));
        }
    }
    let mut models: Vec<&str> = records.iter().map(|r| r.model.as_str()).collect();
    models.sort_by_key(|m| model_order(m));
    models.dedup();

    let sorted = |model: &str, p: PrecisionMode| {
        let mut v: Vec<&RunRecord> = records
            .iter()
            .filter(|r| r.model == model && r.precision == p)
            .collect();
        v.sort_by_key(|r| r.batch);
        v
    };

    let mut pairs = Vec::new();
    for &m in &models {
        let (f, a) = (sorted(m, PrecisionMode::Fp32), sorted(m, PrecisionMode::Amp));
        for i in 0..f.len().max(a.len()) {
            pairs.push(PairRow {
                model: m.to_string(),
                fp32: f.get(i).map(|r| (*r).clone()),
                amp: a.get(i).map(|r| (*r).clone()),
            });
        }
    }

    let precision = if !sorted(baseline, PrecisionMode::Amp).is_empty() {
        PrecisionMode::Amp
    } else if !sorted(baseline, PrecisionMode::Fp32).is_empty() {
        PrecisionMode::Fp32
    } else {
        return Err(Error::contract(format!("baseline {baseline:?} has no run record")));
    };
    let base = sorted(baseline, precision)[0];
    let rel = |v: Option<f64>, b: Option<f64>| match (v, b) {
        (Some(v), Some(b)) => relative_increase_pct(v, b).ok(),
        _ => None,
    };
    let base_params = params.get(baseline).map(|&p| p as f64);
    let mut relative = Vec::new();
    for &m in &models {
        for r in sorted(m, precision) {
            let p = params.get(m).copied();
            relative.push(RelativeRow {
                model: m.to_string(),
                batch: r.batch,
                params: p,
                params_pct: rel(p.map(|p| p as f64), base_params),
                epoch_time_pct: rel(r.mean_epoch_s, base.mean_epoch_s),
                energy_pct: rel(r.energy_j, base.energy_j),
            });
        }
    }
    Ok(Report {
        baseline: baseline.to_string(),
        relative_precision: precision,
        pairs,
        relative,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fixed(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

fn batch_of(r: &Option<RunRecord>) -> Option<u64> {
    r.as_ref().map(|r| r.batch)
}

fn get(r: &Option<RunRecord>, f: fn(&RunRecord) -> Option<f64>) -> Option<f64> {
    r.as_ref().and_then(f)
}

fn to_csv(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

pub const USAGE_CSV_HEADER: [&str; 11] = [
    "model", "batch_fp32", "batch_amp", "avg_sm_fp32", "avg_sm_amp", "max_mem_util_fp32",
    "max_mem_util_amp", "avg_mem_fp32", "avg_mem_amp", "energy_j_fp32", "energy_j_amp",
];
pub const SPEEDUP_CSV_HEADER: [&str; 7] = [
    "model", "batch_fp32", "batch_amp", "mean_epoch_s_fp32", "mean_epoch_s_amp",
    "percent_reduction", "speedup_ratio_pct",
];
pub const RELATIVE_CSV_HEADER: [&str; 7] = [
    "model", "precision", "batch", "params", "params_increase_pct", "epoch_time_increase_pct",
    "energy_increase_pct",
];

impl Report {
    /// Utilization and energy per model, with the AMP energy reduction.
    pub fn usage_csv(&self) -> String {
        let mut header = USAGE_CSV_HEADER.to_vec();
        header.push("energy_reduction_pct");
        let rows = self
            .pairs
            .iter()
            .map(|p| {
                vec![
                    p.model.clone(),
                    batch_of(&p.fp32).map(|b| b.to_string()).unwrap_or_default(),
                    batch_of(&p.amp).map(|b| b.to_string()).unwrap_or_default(),
                    cell(get(&p.fp32, |r| r.avg_sm)),
                    cell(get(&p.amp, |r| r.avg_sm)),
                    cell(get(&p.fp32, |r| r.max_mem_util)),
                    cell(get(&p.amp, |r| r.max_mem_util)),
                    cell(get(&p.fp32, |r| r.avg_mem)),
                    cell(get(&p.amp, |r| r.avg_mem)),
                    cell(get(&p.fp32, |r| r.energy_j)),
                    cell(get(&p.amp, |r| r.energy_j)),
                    cell(p.energy_reduction_pct()),
                ]
            })
            .collect();
        to_csv(&header, rows)
    }

    pub fn speedup_csv(&self) -> String {
        let rows = self
            .pairs
            .iter()
            .map(|p| {
                vec![
                    p.model.clone(),
                    batch_of(&p.fp32).map(|b| b.to_string()).unwrap_or_default(),
                    batch_of(&p.amp).map(|b| b.to_string()).unwrap_or_default(),
                    cell(get(&p.fp32, |r| r.mean_epoch_s)),
                    cell(get(&p.amp, |r| r.mean_epoch_s)),
                    cell(p.percent_reduction()),
                    cell(p.speedup_ratio_pct()),
                ]
            })
            .collect();
        to_csv(&SPEEDUP_CSV_HEADER, rows)
    }

    pub fn relative_csv(&self) -> String {
        let rows = self
            .relative
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    self.relative_precision.label().to_string(),
                    r.batch.to_string(),
                    r.params.map(|p| p.to_string()).unwrap_or_default(),
                    cell(r.params_pct),
                    cell(r.epoch_time_pct),
                    cell(r.energy_pct),
                ]
            })
            .collect();
        to_csv(&RELATIVE_CSV_HEADER, rows)
    }

    pub fn energy_reduction_range(&self) -> Option<(f64, f64)> {
        let v: Vec<f64> = self.pairs.iter().filter_map(PairRow::energy_reduction_pct).collect();
        if v.is_empty() {
            return None;
        }
        Some((
            v.iter().copied().fold(f64::INFINITY, f64::min),
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let b = |r: &Option<RunRecord>| batch_of(r).map(|b| b.to_string()).unwrap_or_else(|| "-".into());
        writeln!(s, "GPU utilization and energy").unwrap();
        writeln!(
            s,
            "{:<8} {:>11} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>14} {:>14} {:>9}",
            "model", "batch", "sm32", "smAMP", "maxm32", "maxmAMP", "avgm32", "avgmAMP", "energy32 J", "energyAMP J", "saved %"
        )
        .unwrap();
        for p in &self.pairs {
            writeln!(
                s,
                "{:<8} {:>11} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>14} {:>14} {:>9}",
                p.model,
                format!("{}/{}", b(&p.fp32), b(&p.amp)),
                fixed(get(&p.fp32, |r| r.avg_sm)),
                fixed(get(&p.amp, |r| r.avg_sm)),
                fixed(get(&p.fp32, |r| r.max_mem_util)),
                fixed(get(&p.amp, |r| r.max_mem_util)),
                fixed(get(&p.fp32, |r| r.avg_mem)),
                fixed(get(&p.amp, |r| r.avg_mem)),
                fixed(get(&p.fp32, |r| r.energy_j)),
                fixed(get(&p.amp, |r| r.energy_j)),
                fixed(p.energy_reduction_pct()),
            )
            .unwrap();
        }
        if let Some((lo, hi)) = self.energy_reduction_range() {
            writeln!(s, "energy reduction range: {lo:.2}% to {hi:.2}%").unwrap();
        }
        writeln!(s, "\nMean epoch time").unwrap();
        writeln!(
            s,
            "{:<8} {:>11} {:>12} {:>12} {:>12} {:>12}",
            "model", "batch", "fp32 s", "amp s", "reduction %", "speedup %"
        )
        .unwrap();
        for p in &self.pairs {
            writeln!(
                s,
                "{:<8} {:>11} {:>12} {:>12} {:>12} {:>12}",
                p.model,
                format!("{}/{}", b(&p.fp32), b(&p.amp)),
                fixed(get(&p.fp32, |r| r.mean_epoch_s)),
                fixed(get(&p.amp, |r| r.mean_epoch_s)),
                fixed(p.percent_reduction()),
                fixed(p.speedup_ratio_pct()),
            )
            .unwrap();
        }
        writeln!(
            s,
            "\nRelative to {} ({} runs)",
            self.baseline,
            self.relative_precision.label()
        )
        .unwrap();
        writeln!(
            s,
            "{:<8} {:>6} {:>15} {:>12} {:>12} {:>12}",
            "model", "batch", "params", "params %", "time %", "energy %"
        )
        .unwrap();
        for r in &self.relative {
            writeln!(
                s,
                "{:<8} {:>6} {:>15} {:>12} {:>12} {:>12}",
                r.model,
                r.batch,
                r.params.map(|p| p.to_string()).unwrap_or_else(|| "-".into()),
                fixed(r.params_pct),
                fixed(r.epoch_time_pct),
                fixed(r.energy_pct),
            )
            .unwrap();
        }
        s
    }
}
