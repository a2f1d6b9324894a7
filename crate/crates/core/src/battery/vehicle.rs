use serde::{Deserialize, Serialize};

use super::table::PiecewiseLinear;
use crate::{Error, Result};

pub const GRAVITY: f64 = 9.81;

/// Longitudinal road-load surrogate of the vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// Drag coefficient times frontal area, m².
    pub drag_area: f64,
    /// kg/m³
    pub air_density: f64,
    pub c_rr: f64,
    /// Battery-to-wheel efficiency, applied in both directions.
    pub driveline_eff: f64,
    /// Fraction of negative wheel power recovered, by speed (m/s).
    pub regen_fraction: PiecewiseLinear,
    /// Constant auxiliary load, watts.
    pub aux_power: f64,
    /// Motor power limit, watts.
    pub motor_power_limit: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1600.0,
            drag_area: 0.65,
            air_density: 1.2,
            c_rr: 0.010,
            driveline_eff: 0.90,
            // friction brakes only below 1 m/s
            regen_fraction: PiecewiseLinear::new(vec![
                (0.0, 0.0),
                (1.0, 0.0),
                (5.0, 0.55),
                (12.0, 0.75),
                (40.0, 0.80),
            ])
            .expect("static table"),
            aux_power: 0.0,
            motor_power_limit: 102_000.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::param("mass", "must be > 0"));
        }
        if !(self.driveline_eff > 0.0 && self.driveline_eff <= 1.0) {
            return Err(Error::param("driveline_eff", "must be in (0, 1]"));
        }
        if self.drag_area < 0.0 || self.air_density < 0.0 || self.c_rr < 0.0 {
            return Err(Error::param("road_load", "coefficients must be >= 0"));
        }
        if self.aux_power < 0.0 || !(self.motor_power_limit > 0.0) {
            return Err(Error::param("power", "aux >= 0 and motor limit > 0"));
        }
        let regen = &self.regen_fraction;
        if !regen.is_non_decreasing() || regen.eval(0.0) != 0.0 {
            return Err(Error::param(
                "regen_fraction",
                "must be non-decreasing and 0 at standstill",
            ));
        }
        if regen.knots().iter().any(|k| !(0.0..=1.0).contains(&k.1)) {
            return Err(Error::param("regen_fraction", "values must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadLoad {
    /// Power at the wheels, watts.
    pub wheel_w: f64,
    /// Power drawn from the battery after limits, watts.
    pub battery_w: f64,
    /// The battery-side value hit a power limit.
    pub clamped: bool,
}

/// Battery-side power needed to follow speed `v` with acceleration `a` on
/// road grade `grade` (radians).
pub fn road_load_power(
    v: f64,
    a: f64,
    grade: f64,
    veh: &VehicleParams,
    pack_power_limit: f64,
) -> RoadLoad {
    let m = veh.mass;
    let force = m * a
        + m * GRAVITY * grade.sin()
        + 0.5 * veh.air_density * veh.drag_area * v * v
        + veh.c_rr * m * GRAVITY * grade.cos();
    let wheel_w = force * v;
    let raw = if wheel_w >= 0.0 {
        wheel_w / veh.driveline_eff + veh.aux_power
    } else {
        wheel_w * veh.driveline_eff * veh.regen_fraction.eval(v) + veh.aux_power
    };
    let upper = (veh.motor_power_limit / veh.driveline_eff + veh.aux_power).min(pack_power_limit);
    let lower = -pack_power_limit;
    let battery_w = raw.clamp(lower, upper);
    RoadLoad {
        wheel_w,
        battery_w,
        clamped: battery_w != raw,
    }
}
