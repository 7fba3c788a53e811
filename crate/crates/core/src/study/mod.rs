//! Phase-structured study orchestration, logging and reporting.

mod config;
mod log;
mod oracle_check;
mod report;
mod runner;
mod sweep;

pub use config::{
    Phase1Allocation, Phase2Allocation, StudyConfig, TimingConfig, TimingMode, CONFIG_SCHEMA_VERSION,
};
pub use log::{
    Funnel, Group, InterventionRecord, LogMetadata, StudyLog, TrainingEvent, TriggerEvent, TriggerSource,
    LOG_SCHEMA_VERSION,
};
pub use runner::{allocate, compare_timing, load_catalog, run_study, run_study_with, TimingComparison};
pub use report::{
    final_week, final_week_mean, observations, participant_means, plot_data, records_csv, summary_csv,
    weekly_summary, welch_csv, welch_table, write_report, Metric, PlotData, ReportFiles, WeeklyRow, WelchRow,
    RECORD_COLUMNS, SUMMARY_CSV_COLUMNS, WELCH_COLUMNS,
};
pub use oracle_check::{oracle_check, InstanceReward, OracleCheck, OracleReport, SeedOutcome};
pub use sweep::{parse_values, set_path, sweep, sweep_config, sweep_csv, SweepRow, SWEEP_COLUMNS};
