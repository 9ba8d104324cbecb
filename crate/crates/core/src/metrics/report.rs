use std::io::Write;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::contingency::{accumulate_thresholds, ContingencyTable, Scores, ThresholdSet};

pub fn mse(pred: &[f32], truth: &[f32]) -> Result<f64> {
    Ok(sq_err(pred, truth)? / pred.len().max(1) as f64)
}

fn sq_err(pred: &[f32], truth: &[f32]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::contract(format!(
            "MSE shapes differ: {} vs {} elements",
            pred.len(),
            truth.len()
        )));
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(&p, &t)| {
            let d = f64::from(p) - f64::from(t);
            d * d
        })
        .sum())
}

/// Repeats the last input frame: `[.., F, H, W]` input → `[.., lead, H, W]`.
pub fn persistence(input: &Tensor<f32>, lead: usize) -> Result<Tensor<f32>> {
    let rank = input.rank();
    if rank < 3 {
        return Err(Error::contract("persistence needs a [.., T, H, W] input"));
    }
    let s = input.shape();
    let (t, plane) = (s[rank - 3], s[rank - 2] * s[rank - 1]);
    if t == 0 {
        return Err(Error::contract("persistence needs at least one input frame"));
    }
    let mut out = Vec::with_capacity(input.len() / t * lead);
    for seq in input.data().chunks_exact(t * plane) {
        let last = &seq[(t - 1) * plane..];
        for _ in 0..lead {
            out.extend_from_slice(last);
        }
    }
    let mut shape = s.to_vec();
    shape[rank - 3] = lead;
    Tensor::from_vec(&shape, out)
}

/// Pooled verification over a test set: contingency counts and squared
/// errors are summed per lead time before any score is formed.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricAccumulator {
    thresholds: ThresholdSet,
    lead_times: usize,
    /// `tables[lead][threshold]`.
    tables: Vec<Vec<ContingencyTable>>,
    sq_err: Vec<f64>,
    pixels: Vec<u64>,
}

impl MetricAccumulator {
    pub fn new(thresholds: ThresholdSet, lead_times: usize) -> Self {
        let n = thresholds.len();
        MetricAccumulator {
            thresholds,
            lead_times,
            tables: vec![vec![ContingencyTable::default(); n]; lead_times],
            sq_err: vec![0.0; lead_times],
            pixels: vec![0; lead_times],
        }
    }

    /// Adds `[N, lead, H, W]` or `[lead, H, W]` forecast/truth pairs.
    pub fn add(&mut self, pred: &Tensor<f32>, truth: &Tensor<f32>) -> Result<()> {
        if pred.shape() != truth.shape() {
            return Err(Error::contract(format!(
                "forecast shape {:?} != truth shape {:?}",
                pred.shape(),
                truth.shape()
            )));
        }
        let rank = pred.rank();
        if !(rank == 3 || rank == 4) || pred.shape()[rank - 3] != self.lead_times {
            return Err(Error::contract(format!(
                "expected [N, {}, H, W] forecasts, got {:?}",
                self.lead_times,
                pred.shape()
            )));
        }
        let plane = pred.shape()[rank - 2] * pred.shape()[rank - 1];
        let seq = plane * self.lead_times;
        for (p, t) in pred.data().chunks_exact(seq).zip(truth.data().chunks_exact(seq)) {
            for lead in 0..self.lead_times {
                let r = lead * plane..(lead + 1) * plane;
                let tables = accumulate_thresholds(&p[r.clone()], &t[r.clone()], &self.thresholds)?;
                for (acc, t) in self.tables[lead].iter_mut().zip(tables) {
                    *acc += t;
                }
                self.sq_err[lead] += sq_err(&p[r.clone()], &t[r])?;
                self.pixels[lead] += plane as u64;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &MetricAccumulator) -> Result<()> {
        if self.thresholds != other.thresholds || self.lead_times != other.lead_times {
            return Err(Error::contract("cannot merge accumulators with different layouts"));
        }
        for (a, b) in self.tables.iter_mut().zip(&other.tables) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        for i in 0..self.lead_times {
            self.sq_err[i] += other.sq_err[i];
            self.pixels[i] += other.pixels[i];
        }
        Ok(())
    }

    pub fn report(&self) -> MetricReport {
        let mse_per_lead: Vec<Option<f64>> = self
            .sq_err
            .iter()
            .zip(&self.pixels)
            .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
            .collect();
        let total: u64 = self.pixels.iter().sum();
        let overall_mse = (total > 0).then(|| self.sq_err.iter().sum::<f64>() / total as f64);
        MetricReport {
            thresholds: self.thresholds.values().to_vec(),
            tables: self.tables.clone(),
            mse_per_lead,
            overall_mse,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub thresholds: Vec<f32>,
    /// `tables[lead][threshold]`, lead 0 is the first forecast step.
    pub tables: Vec<Vec<ContingencyTable>>,
    pub mse_per_lead: Vec<Option<f64>>,
    pub overall_mse: Option<f64>,
}

pub const CSV_HEADER: [&str; 11] = [
    "threshold", "lead_time", "H", "M", "FA", "CR", "POD", "SUCR", "CSI", "BIAS", "MSE",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_threshold(t: f32) -> String {
    if t.fract() == 0.0 {
        format!("{t:.0}")
    } else {
        t.to_string()
    }
}

impl MetricReport {
    /// Table pooled over every lead time for one threshold.
    pub fn pooled(&self, threshold: usize) -> ContingencyTable {
        self.tables.iter().map(|row| row[threshold]).sum()
    }

    pub fn scores(&self, lead: usize, threshold: usize) -> Scores {
        self.tables[lead][threshold].scores()
    }

    /// One row per (threshold, lead time 1..=L), then one `all` row per
    /// threshold holding the 12-step pooled scores and overall MSE. Undefined
    /// values are empty cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(CSV_HEADER).map_err(io)?;
        for (j, &t) in self.thresholds.iter().enumerate() {
            let rows = self
                .tables
                .iter()
                .enumerate()
                .map(|(l, row)| ((l + 1).to_string(), row[j], self.mse_per_lead[l]))
                .chain(std::iter::once(("all".to_string(), self.pooled(j), self.overall_mse)));
            for (lead, table, mse) in rows {
                let s = table.scores();
                w.write_record([
                    fmt_threshold(t),
                    lead,
                    table.hits.to_string(),
                    table.misses.to_string(),
                    table.false_alarms.to_string(),
                    table.correct_rejections.to_string(),
                    cell(s.pod),
                    cell(s.sucr),
                    cell(s.csi),
                    cell(s.bias),
                    cell(mse),
                ])
                .map_err(io)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mse_examples() {
        let a: Vec<f32> = (0..20).map(|i| i as f32).collect();
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b: Vec<f32> = a.iter().map(|v| v + 2.0).collect();
        assert_eq!(mse(&b, &a).unwrap(), 4.0);
        assert!(mse(&a, &b[1..]).is_err());
    }

    #[test]
    fn mse_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p: Vec<f32> = (0..4096).map(|_| rng.gen_range(0.0..255.0)).collect();
        let t: Vec<f32> = (0..4096).map(|_| rng.gen_range(0.0..255.0)).collect();
        let mut acc = 0f64;
        for i in 0..p.len() {
            acc += (p[i] as f64 - t[i] as f64).powi(2);
        }
        let oracle = acc / p.len() as f64;
        assert!((mse(&p, &t).unwrap() - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn persistence_repeats_last_frame() {
        let x = Tensor::from_vec(&[2, 3, 1, 2], (0..12).map(|v| v as f32).collect()).unwrap();
        let p = persistence(&x, 4).unwrap();
        assert_eq!(p.shape(), &[2, 4, 1, 2]);
        assert_eq!(&p.data()[..8], &[4.0, 5.0, 4.0, 5.0, 4.0, 5.0, 4.0, 5.0]);
        assert_eq!(&p.data()[8..10], &[10.0, 11.0]);
    }

    #[test]
    fn persistence_error_grows_for_moving_blob() {
        use crate::data::{synth_advect, window_default, AdvectSpec};
        // Wide blob kept inside the frame: displaced copies still overlap at lead 12.
        let spec = AdvectSpec {
            height: 48,
            width: 128,
            n_blobs: 1,
            velocity: (2.0, 0.0),
            sigma: 8.0,
            decay: 0.0,
            ..AdvectSpec::square(64)
        };
        let ev = (0..)
            .map(|s| synth_advect(&spec, s).unwrap())
            .find(|ev| {
                let f0 = &ev.frames().data()[..48 * 128];
                let i = (0..f0.len()).max_by(|&a, &b| f0[a].total_cmp(&f0[b])).unwrap();
                (i % 128) < 40 && (16..32).contains(&(i / 128))
            })
            .unwrap();
        let w = &window_default(&ev).unwrap()[0];
        let mut acc = MetricAccumulator::new(ThresholdSet::default(), 12);
        acc.add(&persistence(&w.input, 12).unwrap(), &w.target).unwrap();
        let m: Vec<f64> = acc.report().mse_per_lead.into_iter().map(Option::unwrap).collect();
        assert!(m.windows(2).all(|p| p[1] > p[0]), "{m:?}");
    }

    #[test]
    fn pooled_report_and_csv() {
        let truth = Tensor::from_vec(&[1, 2, 1, 2], vec![20.0, 0.0, 80.0, 0.0]).unwrap();
        let pred = Tensor::from_vec(&[1, 2, 1, 2], vec![20.0, 20.0, 0.0, 0.0]).unwrap();
        let th = ThresholdSet::new(vec![16.0, 74.0]).unwrap();
        let mut acc = MetricAccumulator::new(th.clone(), 2);
        acc.add(&pred, &truth).unwrap();
        let mut other = MetricAccumulator::new(th, 2);
        other.add(&pred, &truth).unwrap();
        acc.merge(&other).unwrap();
        let r = acc.report();
        assert_eq!(r.tables[0][0], ContingencyTable::new(2, 0, 2, 0));
        assert_eq!(r.tables[1][0], ContingencyTable::new(0, 2, 0, 2));
        assert_eq!(r.pooled(0), ContingencyTable::new(2, 2, 2, 2));
        assert_eq!(r.mse_per_lead, vec![Some(200.0), Some(3200.0)]);
        assert_eq!(r.overall_mse, Some(1700.0));

        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "threshold,lead_time,H,M,FA,CR,POD,SUCR,CSI,BIAS,MSE");
        assert_eq!(lines.len(), 1 + 2 * 3);
        // Threshold 74, lead 1: nothing observed or forecast → all scores undefined.
        assert_eq!(lines[4], "74,1,0,0,0,4,,,,,200");
        assert_eq!(lines[3], "16,all,2,2,2,2,0.5,0.5,0.3333333333333333,1,1700");
    }

    #[test]
    fn shape_errors() {
        let mut acc = MetricAccumulator::new(ThresholdSet::default(), 12);
        let a = Tensor::<f32>::zeros(&[1, 12, 4, 4]).unwrap();
        let b = Tensor::<f32>::zeros(&[1, 11, 4, 4]).unwrap();
        assert!(acc.add(&a, &b).is_err());
        assert!(acc.add(&b, &b).is_err());
    }
}
