//! `nowcast`: synthetic data generation, mixed-precision training, forecast
//! verification, cost modelling and telemetry reports.
//!
//! Exit status is 0 on success, 1 when an input breaks a contract (shapes,
//! divisibility, memory budget, divergence) and 2 on I/O or parse errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nowcast_amp::amp::PrecisionMode;
use nowcast_amp::exec::{self, ExecMode};
use nowcast_amp::metrics::ThresholdSet;
use nowcast_amp::model::UNetConfig;

mod commands;
mod table;

#[derive(Debug, Parser)]
#[command(name = "nowcast", version, about = "Mixed-precision U-Net nowcasting toolkit")]
struct Cli {
    /// Run every data-parallel kernel on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic advection dataset as SEQZ event files.
    GenData(GenDataArgs),
    /// Train one model and dump run record, history and final weights.
    Train(TrainArgs),
    /// Score forecasts against truth at the given thresholds.
    Eval(EvalArgs),
    /// Analytical parameter, FLOP and memory cost per configuration.
    Cost(CostArgs),
    /// Train a model × precision × batch grid.
    Sweep(SweepArgs),
    /// Usage, speedup and relative-cost tables from run records.
    Report(ReportArgs),
    /// Integrate power logs into energy and utilization fields of a run record.
    IngestTelemetry(IngestArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    events: usize,
    /// Frame height and width in pixels.
    #[arg(long, default_value_t = 64)]
    hw: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory of training events.
    #[arg(long)]
    data: PathBuf,
    /// Optional held-out events scored after training.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value = "U2-8")]
    model: UNetConfig,
    #[arg(long, value_enum, default_value_t = Precision::Fp32)]
    precision: Precision,
    /// Global batch size, sharded across workers.
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Refuse to train when the estimated footprint exceeds this many bytes.
    #[arg(long)]
    budget_bytes: Option<u64>,
    /// Comma-separated pixel thresholds, strictly increasing in [0, 255].
    #[arg(long, default_value_t = ThresholdSet::default().to_string())]
    thresholds: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Forecast files named like the truth files.
    #[arg(long, required_unless_present = "persistence", conflicts_with = "persistence")]
    pred: Option<PathBuf>,
    /// Truth files: events (windowed) or `[N, L, H, W]` targets.
    #[arg(long)]
    truth: PathBuf,
    /// Score the repeat-last-frame forecast of each truth event instead of `--pred`.
    #[arg(long)]
    persistence: bool,
    /// Comma-separated pixel thresholds, strictly increasing in [0, 255].
    #[arg(long, default_value_t = ThresholdSet::default().to_string())]
    thresholds: String,
    /// CSV report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CostArgs {
    /// Models to cost; defaults to the fourteen reference configurations.
    #[arg(long, value_delimiter = ',')]
    model: Vec<UNetConfig>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Precision::Fp32, Precision::Amp])]
    precision: Vec<Precision>,
    #[arg(long, value_delimiter = ',', default_values_t = [4])]
    batch: Vec<u64>,
    /// Input frame height and width.
    #[arg(long, default_value_t = 384)]
    hw: usize,
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    /// Adds a fits column and the largest feasible batch.
    #[arg(long)]
    budget_bytes: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Directory for `cost.csv` and `cost.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = ["U1-8".to_string(), "U2-8".to_string()])]
    model: Vec<String>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Precision::Fp32, Precision::Amp])]
    precision: Vec<Precision>,
    #[arg(long, value_delimiter = ',', default_values_t = [8])]
    batch: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Cells whose estimated footprint exceeds this are skipped as infeasible.
    #[arg(long)]
    budget_bytes: Option<u64>,
    /// Directory for `run_records.csv` and `sweep_status.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run-record CSV files; rows are concatenated.
    #[arg(long, required_unless_present = "reference")]
    records: Vec<PathBuf>,
    /// Use the built-in V100 reference measurements.
    #[arg(long)]
    reference: bool,
    #[arg(long, default_value = "U4-32")]
    baseline: String,
    /// Parameter counts for the relative table.
    #[arg(long, value_enum, default_value_t = ParamSource::Counted)]
    params: ParamSource,
    /// Directory for `usage.csv`, `speedup.csv`, `relative.csv` and `report.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Power-log CSV; repeat once per device.
    #[arg(long, required = true)]
    log: Vec<PathBuf>,
    /// Existing run-record CSV to update.
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_enum)]
    precision: Option<Precision>,
    #[arg(long)]
    batch: Option<u64>,
    /// Output run-record CSV; defaults to `--records`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    Fp32,
    Amp,
}

impl From<Precision> for PrecisionMode {
    fn from(p: Precision) -> Self {
        match p {
            Precision::Fp32 => PrecisionMode::Fp32,
            Precision::Amp => PrecisionMode::Amp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ParamSource {
    /// Analytical counts of the builder's graphs.
    Counted,
    /// Printed reference counts where known, analytical otherwise.
    Printed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.sequential {
        exec::set_mode(ExecMode::Sequential);
    }
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Cost(a) => commands::cost(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Report(a) => commands::report(a),
        Command::IngestTelemetry(a) => commands::ingest_telemetry(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_contract_violation() { 1 } else { 2 })
        }
    }
}
