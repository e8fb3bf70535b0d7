//! Experiment harness for interaction hard thresholding.
//!
//! [`config::RunConfig`] collects every tunable, [`commands`] runs single
//! experiments and parameter sweeps, and [`results`] writes and reads the CSV
//! files they produce.

pub mod commands;
pub mod config;
pub mod error;
pub mod results;

pub use commands::{
    execute_run, execute_sweep_bk, execute_sweep_mp, execute_validate_params, ParamCheck,
    RunReport,
};
pub use config::{DeltaSetting, Mode, Preset, RunConfig};
pub use error::{HarnessError, Result};
pub use results::{
    read_run, read_run_file, read_sweep, read_sweep_file, write_run, write_sweep, Cell, IterRow,
    RunTable, SummaryRow, SweepKind, SweepTable,
};
