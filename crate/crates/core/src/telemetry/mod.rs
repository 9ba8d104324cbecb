//! Power-log ingestion, energy accounting, run records and comparison tables.

mod compare;
mod power;
mod record;
pub mod reference;
mod render;

pub use compare::{energy_reduction_pct, percent_reduction, relative_increase_pct, speedup_ratio_pct};
pub use power::{
    combine_logs, energy_report, integrate_energy, parse_power_csv, parse_power_log, util_stats,
    EnergyReport, PowerSample, UtilStats, POWER_LOG_HEADER,
};
pub use record::{
    read_records, read_records_file, write_records, write_records_file, RunRecord, RUN_RECORD_HEADER,
};
pub use render::{
    render_report, PairRow, RelativeRow, Report, RELATIVE_CSV_HEADER, SPEEDUP_CSV_HEADER, USAGE_CSV_HEADER,
};
