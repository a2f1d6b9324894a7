//! Synthetic trip generation: a longitudinal road-load surrogate drives a
//! one-RC-pair equivalent-circuit cell model, producing per-second trip logs.

mod cell;
mod cycle;
mod table;
mod trip;
mod vehicle;

pub use cell::{cell_current, cell_energy_increment, step_cell, BatteryCellState, BatteryParams};
pub use cycle::{generate_drive_cycle, generate_drive_cycle_with, CycleProfile, DriveCycle};
pub use table::PiecewiseLinear;
pub use trip::{
    generate_fleet, simulate_trip, write_fleet, FleetSpec as SyntheticFleetSpec, SimulatedTrip,
};
pub use vehicle::{road_load_power, RoadLoad, VehicleParams, GRAVITY};

/// Joules per watt-hour.
pub const J_PER_WH: f64 = 3600.0;
