use std::collections::BTreeSet;
use std::io::Write;

use crate::amp::PrecisionMode;
use crate::data::SampleWindow;
use crate::error::{Error, Result};
use crate::model::{estimate_memory, fits, UNetConfig};
use crate::telemetry::RunRecord;

use super::trainer::{TrainConfig, Trainer};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SweepCell {
    pub model: String,
    pub precision: PrecisionMode,
    pub batch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub cells: Vec<SweepCell>,
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    pub workers: usize,
    /// Skip cells whose estimated footprint exceeds `budget_bytes`.
    pub skip_infeasible: bool,
    pub budget_bytes: Option<u64>,
}

impl SweepSpec {
    /// Every combination of the given models, precisions and batch sizes.
    pub fn grid(models: &[String], precisions: &[PrecisionMode], batches: &[usize]) -> Vec<SweepCell> {
        let mut cells = Vec::new();
        for m in models {
            for &p in precisions {
                for &b in batches {
                    cells.push(SweepCell {
                        model: m.clone(),
                        precision: p,
                        batch: b,
                    });
                }
            }
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.cells {
            c.model.parse::<UNetConfig>()?;
            if !seen.insert(c) {
                return Err(Error::contract(format!(
                    "duplicate sweep cell {} {} batch {}",
                    c.model,
                    c.precision.label(),
                    c.batch
                )));
            }
        }
        if self.skip_infeasible && self.budget_bytes.is_none() {
            return Err(Error::contract("skipping infeasible cells needs a memory budget"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Completed,
    Infeasible { required_bytes: u64, budget_bytes: u64 },
    Failed(String),
}

impl CellStatus {
    pub fn label(&self) -> &'static str {
        match self {
            CellStatus::Completed => "completed",
            CellStatus::Infeasible { .. } => "infeasible",
            CellStatus::Failed(_) => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub cell: SweepCell,
    pub status: CellStatus,
    pub record: RunRecord,
    pub losses: Vec<f64>,
    pub skipped_steps: usize,
}

/// Trains every cell on `windows` in order. Per-cell failures are captured
/// in the outcome and do not stop later cells.
pub fn run_sweep(spec: &SweepSpec, windows: &[SampleWindow]) -> Result<Vec<CellOutcome>> {
    spec.validate()?;
    let first = windows
        .first()
        .ok_or_else(|| Error::contract("sweep needs at least one training window"))?;
    let (h, w) = (first.input.shape()[1], first.input.shape()[2]);
    let mut out = Vec::with_capacity(spec.cells.len());
    for cell in &spec.cells {
        let config: UNetConfig = cell.model.parse::<UNetConfig>()?.with_input(h, w);
        let mut outcome = CellOutcome {
            cell: cell.clone(),
            status: CellStatus::Completed,
            record: RunRecord::new(cell.model.clone(), cell.precision, cell.batch as u64),
            losses: Vec::new(),
            skipped_steps: 0,
        };
        if let (true, Some(budget)) = (spec.skip_infeasible, spec.budget_bytes) {
            match estimate_memory(&config, cell.batch as u64, cell.precision) {
                Ok(cost) if !fits(&cost, budget) => {
                    outcome.status = CellStatus::Infeasible {
                        required_bytes: cost.total_bytes(),
                        budget_bytes: budget,
                    };
                    out.push(outcome);
                    continue;
                }
                Ok(_) => {}
                Err(e) => {
                    outcome.status = CellStatus::Failed(e.to_string());
                    out.push(outcome);
                    continue;
                }
            }
        }
        let train = TrainConfig {
            model: config,
            epochs: spec.epochs,
            batch: cell.batch,
            lr: spec.lr,
            precision: cell.precision,
            workers: spec.workers,
            seed: spec.seed,
            train_data: None,
            test_data: None,
            out_dir: None,
        };
        match Trainer::new(train, h, w).and_then(|mut t| t.fit(windows)) {
            Ok(history) => {
                outcome.record.mean_epoch_s = history.mean_epoch_s();
                outcome.losses = history.losses();
                outcome.skipped_steps = history.total_skipped();
            }
            Err(e) => outcome.status = CellStatus::Failed(e.to_string()),
        }
        out.push(outcome);
    }
    Ok(out)
}

pub const SWEEP_STATUS_HEADER: [&str; 8] = [
    "model", "precision", "batch", "status", "detail", "final_loss", "skipped_steps", "required_bytes",
];

pub fn write_sweep_status<W: Write>(out: W, outcomes: &[CellOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(SWEEP_STATUS_HEADER).map_err(io)?;
    for o in outcomes {
        let (detail, required) = match &o.status {
            CellStatus::Completed => (String::new(), String::new()),
            CellStatus::Infeasible {
                required_bytes,
                budget_bytes,
            } => (format!("budget {budget_bytes} bytes"), required_bytes.to_string()),
            CellStatus::Failed(msg) => (msg.clone(), String::new()),
        };
        w.write_record([
            o.cell.model.clone(),
            o.cell.precision.label().to_string(),
            o.cell.batch.to_string(),
            o.status.label().to_string(),
            detail,
            o.losses.last().map(|l| l.to_string()).unwrap_or_default(),
            o.skipped_steps.to_string(),
            required,
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
