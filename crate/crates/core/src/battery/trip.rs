use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::cell::{
    cell_current, cell_energy_increment, step_cell, BatteryCellState, BatteryParams,
};
use super::cycle::{generate_drive_cycle_with, CycleProfile, DriveCycle};
use super::vehicle::{road_load_power, VehicleParams};
use super::J_PER_WH;
use crate::data::{write_trip_csv, TripRecord};
use crate::seed;
use crate::{Error, Result};

/// Output of [`simulate_trip`] together with the simulation events.
#[derive(Debug, Clone)]
pub struct SimulatedTrip {
    pub record: TripRecord,
    pub final_state: BatteryCellState,
    /// Seconds where the battery power hit a limit.
    pub power_clamp_events: usize,
}

impl SimulatedTrip {
    pub fn soc_clamped(&self) -> bool {
        self.final_state.soc_clamped
    }
}

pub const EXTRA_COLUMNS: [&str; 7] = [
    "grade_rad",
    "wheel_power_w",
    "battery_power_w",
    "pack_current_a",
    "cell_current_a",
    "cell_voltage_v",
    "soc",
];

/// Drives `cycle` through the road-load model and the cell model, one row per
/// second.
///
/// The cell current at second `t` uses the terminal voltage of second `t - 1`,
/// which avoids an implicit solve for the current/voltage coupling.
pub fn simulate_trip(
    cycle: &DriveCycle,
    veh: &VehicleParams,
    bat: &BatteryParams,
    soc0: f64,
    vehicle_id: &str,
) -> Result<SimulatedTrip> {
    if !(soc0 > 0.0 && soc0 <= 1.0) {
        return Err(Error::param("soc0", "must be in (0, 1]"));
    }
    if cycle.speed.len() != cycle.grade.len() || cycle.speed.is_empty() {
        return Err(Error::param(
            "cycle",
            "speed and grade must be equal, non-zero length",
        ));
    }
    veh.validate()?;
    bat.validate()?;
    let n = cycle.speed.len();
    let dt = cycle.dt;

    let mut rec = TripRecord::with_capacity(vehicle_id, n);
    let mut extras: Vec<Vec<f64>> = vec![Vec::with_capacity(n); EXTRA_COLUMNS.len()];
    let mut state = BatteryCellState::new(soc0);
    let mut v_terminal = bat.voc.eval(soc0);
    let mut distance = 0.0;
    let mut clamp_events = 0;

    for t in 0..n {
        let v = cycle.speed[t];
        let a = if t == 0 {
            0.0
        } else {
            (v - cycle.speed[t - 1]) / dt
        };
        if t > 0 {
            distance += v * dt;
        }
        let load = road_load_power(v, a, cycle.grade[t], veh, bat.pack_power_limit);
        clamp_events += usize::from(load.clamped);
        let i_cell = cell_current(load.battery_w, bat.n_cells, v_terminal)?;
        let de = cell_energy_increment(state.soc, bat, i_cell, dt);
        let (next, v_bc) = step_cell(&state, bat, i_cell, dt);

        rec.time.push(t as f64 * dt);
        rec.speed.push(v);
        rec.acceleration.push(a);
        rec.distance.push(distance);
        rec.energy_wh.push(bat.n_cells as f64 * de / J_PER_WH);
        let row = [
            cycle.grade[t],
            load.wheel_w,
            load.battery_w,
            i_cell * bat.cells_parallel as f64,
            i_cell,
            v_bc,
            state.soc,
        ];
        for (col, value) in extras.iter_mut().zip(row) {
            col.push(value);
        }
        state = next;
        v_terminal = v_bc;
    }
    rec.extras = EXTRA_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .zip(extras)
        .collect();
    Ok(SimulatedTrip {
        record: rec,
        final_state: state,
        power_clamp_events: clamp_events,
    })
}

/// Synthetic fleet: one trip per vehicle, vehicle-specific driving style,
/// payload and initial charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSpec {
    pub size: usize,
    pub seed: u64,
    /// Seconds per trip.
    pub duration: usize,
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self {
            size: 10,
            seed: 42,
            duration: 1800,
        }
    }
}

pub fn generate_fleet(spec: &FleetSpec) -> Result<Vec<SimulatedTrip>> {
    if spec.size == 0 {
        return Err(Error::param("fleet_size", "must be >= 1"));
    }
    let bat = BatteryParams::default();
    (0..spec.size)
        .map(|v| {
            let idx = [v as u64];
            let profile = CycleProfile::sample(seed::derive(spec.seed, "profile", &idx));
            let cycle = generate_drive_cycle_with(
                seed::derive(spec.seed, "cycle", &idx),
                spec.duration,
                &profile,
            )?;
            let mut rng = seed::rng(seed::derive(spec.seed, "vehicle", &idx));
            let veh = VehicleParams {
                mass: 1600.0 + rng.gen_range(0.0..300.0),
                ..VehicleParams::default()
            };
            let soc0 = rng.gen_range(0.6..0.95);
            simulate_trip(&cycle, &veh, &bat, soc0, &format!("V{}", v + 1))
        })
        .collect()
}

/// Writes one CSV per vehicle into `dir`, named `<vehicle_id>.csv`.
pub fn write_fleet(trips: &[SimulatedTrip], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    trips
        .iter()
        .map(|t| {
            let path = dir.join(format!("{}.csv", t.record.vehicle_id));
            write_trip_csv(&t.record, &path)?;
            Ok(path)
        })
        .collect()
}
