//! Experiment front end: config files, runs, sweeps and rendered tables.
//!
//! Everything the command-line tool does is reachable from here.

mod config;
mod render;
mod run;
mod sweep;

pub use config::{parse_override, DataSource, ExperimentConfig, TopologyMode, DEFAULTS};
pub use render::{build_tables, cmd_report, Cell, Table};
pub use run::{
    cmd_gen_data, cmd_run, load_fleet, load_records, run_spec, write_outcome, PerformerSelection,
};
pub use sweep::{
    cmd_sweep, SweepAxis, SweepFailure, SweepPoint, SweepReport, SWEEP_SCHEMA_VERSION,
};
