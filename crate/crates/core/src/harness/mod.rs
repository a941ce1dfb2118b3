//! Data ingestion, simulation, experiments and report output.

mod data;
mod experiment;
mod presets;
mod report;
mod simulate;
mod tables;

pub use data::{load_csv, parse_csv, write_matrix_csv, CsvSchema, Dataset};
pub use experiment::{run_experiment, ExperimentCell, ExperimentMetrics, RunRecord};
pub use presets::{calibration_cell, grid, mean_shift_cell, midpoint_cell, multi_cell, Preset};
pub use report::{
    diphoragram_csv, emit_diphoragram, emit_metrics, emit_report, metrics_csv, report_csv, runs_csv, ReportDocument,
    ReportFormat, SCHEMA_VERSION,
};
pub use simulate::{simulate, Covariance, SegmentDistribution, SimulationSpec};
pub use tables::{matrix_csv, ranks_csv, NullTable, TABLE_LEVELS};
