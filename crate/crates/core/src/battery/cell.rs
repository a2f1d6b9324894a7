use serde::{Deserialize, Serialize};

use super::table::PiecewiseLinear;
use crate::{Error, Result};

/// Cell and pack parameters of the RC-equivalent battery model.
///
/// Lookup tables map state of charge (fraction) to volts, ohms, ohms and
/// farads respectively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    /// Total cell count of the pack.
    pub n_cells: usize,
    /// Parallel cells per series group; pack current is `cells_parallel * I_cell`.
    pub cells_parallel: usize,
    /// Cell charge capacity, ampere-seconds.
    pub capacity_as: f64,
    pub voc: PiecewiseLinear,
    pub r0: PiecewiseLinear,
    pub rp1: PiecewiseLinear,
    pub cp1: PiecewiseLinear,
    /// Pack power limit, watts (both directions).
    pub pack_power_limit: f64,
}

impl Default for BatteryParams {
    /// 120s5p pack of ~20 Ah cells (about 45 kWh), 160 kW limit.
    fn default() -> Self {
        let voc = PiecewiseLinear::new(vec![
            (0.0, 3.40),
            (0.1, 3.55),
            (0.3, 3.65),
            (0.5, 3.75),
            (0.7, 3.88),
            (0.9, 4.05),
            (1.0, 4.20),
        ])
        .expect("static table");
        Self {
            n_cells: 600,
            cells_parallel: 5,
            capacity_as: 20.0 * 3600.0,
            voc,
            r0: PiecewiseLinear::flat(0.0, 1.0, 2.0e-3),
            rp1: PiecewiseLinear::flat(0.0, 1.0, 1.5e-3),
            cp1: PiecewiseLinear::flat(0.0, 1.0, 5.0e3),
            pack_power_limit: 160_000.0,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_cells == 0 {
            return Err(Error::param("n_cells", "must be >= 1"));
        }
        if self.cells_parallel == 0 || !self.n_cells.is_multiple_of(self.cells_parallel) {
            return Err(Error::param(
                "cells_parallel",
                "must be >= 1 and divide n_cells",
            ));
        }
        if !(self.capacity_as > 0.0) {
            return Err(Error::param("capacity_as", "must be > 0"));
        }
        if !(self.pack_power_limit > 0.0) {
            return Err(Error::param("pack_power_limit", "must be > 0"));
        }
        let tables = [
            ("voc", &self.voc, true),
            ("r0", &self.r0, false),
            ("rp1", &self.rp1, true),
            ("cp1", &self.cp1, true),
        ];
        for (name, table, strictly_positive) in tables {
            let (lo, hi) = table.domain();
            if lo < 0.0 || hi > 1.0 {
                return Err(Error::param(name, "knots must lie within SoC [0, 1]"));
            }
            // Piecewise-linear with flat extrapolation: the knot minimum is the
            // minimum over the whole domain.
            let min = table.min_value();
            if strictly_positive && min <= 0.0 || min < 0.0 {
                return Err(Error::param(name, format!("non-positive value {min}")));
            }
        }
        Ok(())
    }

    /// Cells in series.
    pub fn cells_series(&self) -> usize {
        self.n_cells / self.cells_parallel
    }
}

/// Dynamic state of one (representative) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryCellState {
    pub soc: f64,
    /// Transient voltage across the RC pair, volts.
    pub v_p1: f64,
    /// Cumulative cell energy, joules (negative while regenerating).
    pub energy_j: f64,
    /// Set once SoC left [0, 1] and had to be clamped.
    pub soc_clamped: bool,
}

impl BatteryCellState {
    pub fn new(soc0: f64) -> Self {
        Self {
            soc: soc0,
            v_p1: 0.0,
            energy_j: 0.0,
            soc_clamped: false,
        }
    }
}

/// Cell current for a pack power draw; positive means discharge.
pub fn cell_current(p_pack_w: f64, n_cells: usize, v_cell: f64) -> Result<f64> {
    if n_cells == 0 {
        return Err(Error::param("n_cells", "must be >= 1"));
    }
    if !(v_cell > 0.0) {
        return Err(Error::DegenerateVoltage(v_cell));
    }
    Ok(p_pack_w / (n_cells as f64 * v_cell))
}

/// Rectangle-rule increment of the cell energy integral.
pub fn cell_energy_increment(soc: f64, params: &BatteryParams, i_cell: f64, dt: f64) -> f64 {
    params.voc.eval(soc) * i_cell * dt
}

/// One forward-Euler step of the cell model.
///
/// Returns the next state and the terminal voltage, both the voltage and the
/// energy increment being evaluated at the pre-step state.
pub fn step_cell(
    state: &BatteryCellState,
    params: &BatteryParams,
    i_cell: f64,
    dt: f64,
) -> (BatteryCellState, f64) {
    debug_assert!(dt > 0.0);
    let soc = state.soc;
    let r0 = params.r0.eval(soc);
    let rp1 = params.rp1.eval(soc);
    let cp1 = params.cp1.eval(soc);
    let v_bc = params.voc.eval(soc) - state.v_p1 - r0 * i_cell;

    let v_p1 = state.v_p1 + dt * (i_cell / cp1 - state.v_p1 / (rp1 * cp1));
    let mut next_soc = soc - dt * i_cell / params.capacity_as;
    let mut clamped = state.soc_clamped;
    if !(0.0..=1.0).contains(&next_soc) {
        next_soc = next_soc.clamp(0.0, 1.0);
        clamped = true;
    }
    let next = BatteryCellState {
        soc: next_soc,
        v_p1,
        energy_j: state.energy_j + cell_energy_increment(soc, params, i_cell, dt),
        soc_clamped: clamped,
    };
    (next, v_bc)
}
