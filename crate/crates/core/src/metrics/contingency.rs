use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::exec;

/// VIL pixel values used as event thresholds.
pub const VIP_THRESHOLDS: [f32; 6] = [16.0, 74.0, 133.0, 160.0, 181.0, 219.0];

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet(Vec<f32>);

impl ThresholdSet {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::contract("threshold set is empty"));
        }
        if values.iter().any(|t| !(0.0..=255.0).contains(t)) {
            return Err(Error::contract("thresholds must lie in [0, 255]"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::contract("thresholds must be strictly increasing"));
        }
        Ok(ThresholdSet(values))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of thresholds `t` with `x >= t`.
    fn bin(&self, x: f32) -> usize {
        self.0.partition_point(|&t| t <= x)
    }
}

impl Default for ThresholdSet {
    fn default() -> Self {
        ThresholdSet(VIP_THRESHOLDS.to_vec())
    }
}

/// Comma-separated, the inverse of the `FromStr` impl.
impl std::fmt::Display for ThresholdSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for ThresholdSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f32>()
                    .map_err(|_| Error::Parse(format!("bad threshold {p:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        ThresholdSet::new(values)
    }
}

pub fn binarize(image: &[f32], threshold: f32) -> Vec<bool> {
    image.iter().map(|&x| x >= threshold).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ContingencyTable {
    pub hits: u64,
    pub misses: u64,
    pub false_alarms: u64,
    pub correct_rejections: u64,
}

impl ContingencyTable {
    pub fn new(hits: u64, misses: u64, false_alarms: u64, correct_rejections: u64) -> Self {
        ContingencyTable {
            hits,
            misses,
            false_alarms,
            correct_rejections,
        }
    }

    pub fn total(&self) -> u64 {
        self.hits + self.misses + self.false_alarms + self.correct_rejections
    }

    pub fn accumulate(&mut self, pred: &[bool], truth: &[bool]) -> Result<()> {
        if pred.len() != truth.len() {
            return Err(Error::contract(format!(
                "contingency shapes differ: {} vs {} pixels",
                pred.len(),
                truth.len()
            )));
        }
        for (&p, &t) in pred.iter().zip(truth) {
            match (p, t) {
                (true, true) => self.hits += 1,
                (false, true) => self.misses += 1,
                (true, false) => self.false_alarms += 1,
                (false, false) => self.correct_rejections += 1,
            }
        }
        Ok(())
    }

    pub fn scores(&self) -> Scores {
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        let (h, m, fa) = (self.hits, self.misses, self.false_alarms);
        Scores {
            pod: ratio(h, h + m),
            sucr: ratio(h, h + fa),
            csi: ratio(h, h + m + fa),
            bias: ratio(h + fa, h + m),
        }
    }
}

impl Add for ContingencyTable {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ContingencyTable {
            hits: self.hits + o.hits,
            misses: self.misses + o.misses,
            false_alarms: self.false_alarms + o.false_alarms,
            correct_rejections: self.correct_rejections + o.correct_rejections,
        }
    }
}

impl AddAssign for ContingencyTable {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ContingencyTable {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// `None` marks a score whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub pod: Option<f64>,
    pub sucr: Option<f64>,
    pub csi: Option<f64>,
    pub bias: Option<f64>,
}

const CHUNK: usize = 1 << 14;

/// One table per threshold from a single pass: every pixel pair is reduced
/// to a `(bin(pred), bin(truth))` cell of a joint histogram, and the table at
/// threshold `j` sums the histogram quadrants split at `j`.
pub fn accumulate_thresholds(
    pred: &[f32],
    truth: &[f32],
    thresholds: &ThresholdSet,
) -> Result<Vec<ContingencyTable>> {
    if pred.len() != truth.len() {
        return Err(Error::contract(format!(
            "contingency shapes differ: {} vs {} pixels",
            pred.len(),
            truth.len()
        )));
    }
    let k = thresholds.len() + 1;
    let chunks = pred.len().div_ceil(CHUNK);
    let partial = exec::map_indices(chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(pred.len());
        let mut hist = vec![0u64; k * k];
        for (&p, &t) in pred[lo..hi].iter().zip(&truth[lo..hi]) {
            hist[thresholds.bin(p) * k + thresholds.bin(t)] += 1;
        }
        hist
    });
    let mut hist = vec![0u64; k * k];
    for h in partial {
        for (a, b) in hist.iter_mut().zip(h) {
            *a += b;
        }
    }
    Ok((0..thresholds.len())
        .map(|j| {
            let mut t = ContingencyTable::default();
            for pb in 0..k {
                for tb in 0..k {
                    let n = hist[pb * k + tb];
                    match (pb > j, tb > j) {
                        (true, true) => t.hits += n,
                        (false, true) => t.misses += n,
                        (true, false) => t.false_alarms += n,
                        (false, false) => t.correct_rejections += n,
                    }
                }
            }
            t
        })
        .collect())
}
