//! Forecast verification: thresholded contingency scores, MSE and the
//! persistence baseline.

mod contingency;
mod report;

pub use contingency::{
    accumulate_thresholds, binarize, ContingencyTable, Scores, ThresholdSet, VIP_THRESHOLDS,
};
pub use report::{mse, persistence, MetricAccumulator, MetricReport, CSV_HEADER};
