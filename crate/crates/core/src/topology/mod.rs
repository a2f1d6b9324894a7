//! Multi-round experiments over a fleet: the local baseline, centralized
//! federation through a server, and decentralized peer groups.

mod fleet;
mod performers;
mod report;
mod runner;

pub use fleet::{natural_id_order, prepare_fleet, ClientData, Fleet};
pub use performers::{case6_groups, select_performers, Group, GroupSpec, Performer};
pub use report::{
    ClientMetrics, ClientSummary, CrossEval, ExperimentReport, MaeSelection, RoundRecord, Topology,
    REPORT_SCHEMA_VERSION,
};
pub use runner::{
    cross_evaluate, run_centralized, run_centralized_with, run_decentralized,
    run_decentralized_with, train_baselines, Baselines, RunOutcome, RunSpec,
};
