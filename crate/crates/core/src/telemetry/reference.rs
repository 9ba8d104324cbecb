//! Reference measurements from the original V100 sweep: printed parameter
//! counts, utilization/energy and mean epoch times per configuration.

use crate::amp::PrecisionMode;

use super::record::RunRecord;

/// `(model, printed parameter count)` for the fourteen sweep configurations.
pub const PARAM_COUNTS: [(&str, u64); 14] = [
    ("U3-32", 12_062_476),
    ("U3-64", 16_496_140),
    ("U3-128", 30_807_052),
    ("U3-256", 81_203_212),
    ("U4-32", 16_556_044),
    ("U4-64", 31_053_836),
    ("U4-128", 82_204_684),
    ("U4-256", 273_127_436),
    ("U5-32", 31_113_740),
    ("U5-64", 82_451_468),
    ("U5-128", 274_128_908),
    ("U5-256", 1_013_491_724),
    ("U6-32", 82_511_372),
    ("U6-64", 274_375_692),
];

/// `(model, [avg SM fp32, amp], [max mem fp32, amp], [avg mem fp32, amp], [energy fp32, amp])`.
pub type UsageRow = (&'static str, [f64; 2], [f64; 2], [f64; 2], [f64; 2]);

pub const USAGE: [UsageRow; 13] = [
    ("U3-32", [61.5, 55.0], [40.5, 34.0], [90.5, 84.0], [991_870.0, 834_312.0]),
    ("U3-64", [78.0, 67.0], [49.0, 42.0], [75.0, 90.5], [1_169_834.0, 1_026_087.0]),
    ("U3-128", [89.5, 81.5], [49.5, 44.0], [76.5, 76.5], [1_318_431.0, 1_255_385.0]),
    ("U3-256", [96.0, 94.0], [38.0, 37.0], [100.0, 59.5], [1_540_444.0, 1_428_421.0]),
    ("U4-32", [64.5, 59.0], [40.0, 34.0], [84.0, 75.5], [959_247.0, 826_726.0]),
    ("U4-64", [77.0, 70.5], [48.0, 42.5], [75.0, 87.0], [1_163_470.0, 1_057_388.0]),
    ("U4-128", [91.0, 88.5], [62.0, 39.0], [84.5, 62.5], [1_416_633.0, 1_255_483.0]),
    ("U4-256", [93.0, 94.5], [73.5, 32.0], [100.0, 59.5], [1_474_127.0, 1_349_416.0]),
    ("U5-32", [63.0, 58.0], [41.0, 34.0], [83.5, 74.0], [951_037.0, 815_611.0]),
    ("U5-64", [80.5, 71.5], [47.0, 41.0], [75.0, 83.5], [1_156_716.0, 1_098_744.0]),
    ("U5-128", [93.0, 88.0], [54.0, 34.5], [95.0, 73.5], [1_307_724.0, 1_179_121.0]),
    ("U6-32", [67.5, 62.0], [66.0, 65.0], [28.0, 26.0], [740_556.0, 538_298.0]),
    ("U6-64", [94.0, 89.0], [64.5, 58.0], [26.0, 20.5], [796_253.0, 691_416.0]),
];

/// `(model, [batch fp32, amp], [mean epoch s fp32, amp], printed speedup %)`.
pub type TimingRow = (&'static str, [u64; 2], [f64; 2], f64);

pub const TIMING: [TimingRow; 13] = [
    ("U3-32", [48, 48], [179.093, 140.338], 21.63),
    ("U3-64", [16, 32], [277.04, 191.588], 30.84),
    ("U3-128", [16, 16], [570.643, 339.558], 40.49),
    ("U3-256", [8, 8], [1853.6725, 821.852], 125.54),
    ("U4-32", [32, 32], [173.485, 137.725], 25.96),
    ("U4-64", [16, 32], [295.35, 194.518], 34.14),
    ("U4-128", [8, 8], [749.98, 417.005], 44.39),
    ("U4-256", [4, 8], [2537.88, 1121.4], 55.81),
    ("U5-32", [32, 32], [176.50, 139.26], 21.10),
    ("U5-64", [16, 32], [325.10, 210.21], 35.34),
    ("U5-128", [8, 16], [1045.185, 520.845], 100.67),
    ("U6-32", [4, 4], [392.87, 345.86], 13.59),
    ("U6-64", [4, 4], [1106.48, 562.92], 95.55),
];

/// Run records joining the usage and timing rows (FP32 then AMP per model).
pub fn reference_records() -> Vec<RunRecord> {
    let mut out = Vec::new();
    for (model, batch, time, _) in TIMING {
        let usage = USAGE.iter().find(|u| u.0 == model).expect("both tables list the same models");
        for (i, p) in [PrecisionMode::Fp32, PrecisionMode::Amp].into_iter().enumerate() {
            out.push(RunRecord {
                model: model.to_string(),
                precision: p,
                batch: batch[i],
                mean_epoch_s: Some(time[i]),
                energy_j: Some(usage.4[i]),
                avg_sm: Some(usage.1[i]),
                max_mem_util: Some(usage.2[i]),
                avg_mem: Some(usage.3[i]),
            });
        }
    }
    out
}

pub fn reference_param_counts() -> std::collections::BTreeMap<String, u64> {
    PARAM_COUNTS.iter().map(|&(m, p)| (m.to_string(), p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{percent_reduction, speedup_ratio_pct};

    #[test]
    fn printed_speedups_follow_one_of_two_definitions() {
        let mut by_reduction = Vec::new();
        let mut by_ratio = Vec::new();
        let mut neither = Vec::new();
        for (m, _, [f, a], printed) in TIMING {
            let red = percent_reduction(f, a).unwrap();
            let rat = speedup_ratio_pct(f, a).unwrap();
            if (red - printed).abs() <= 0.02 {
                by_reduction.push(m);
            } else if (rat - printed).abs() <= 0.02 {
                by_ratio.push(m);
            } else {
                neither.push(m);
            }
        }
        assert_eq!(
            by_reduction,
            vec!["U3-32", "U3-64", "U3-128", "U4-64", "U4-128", "U4-256", "U5-32", "U5-64"]
        );
        assert_eq!(by_ratio, vec!["U3-256", "U4-32", "U5-128", "U6-32"]);
        // 49.13% reduction, 96.56% ratio against 95.55 printed.
        assert_eq!(neither, vec!["U6-64"]);
    }

    #[test]
    fn records_cover_every_row() {
        let r = reference_records();
        assert_eq!(r.len(), 26);
        assert_eq!(r[2].batch, 16);
        assert_eq!(r[3].batch, 32);
    }
}
