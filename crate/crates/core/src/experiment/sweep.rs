//! `sweep`: one run per axis value, combined into a single table.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, TopologyMode};
use super::run::run_into;
use crate::data::SplitSpec;
use crate::topology::ExperimentReport;
use crate::{Error, Result};

pub const SWEEP_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Rounds,
    Split,
    Window,
}

impl SweepAxis {
    fn key(self) -> &'static str {
        match self {
            SweepAxis::Rounds => "fl.rounds",
            SweepAxis::Split => "data.split",
            SweepAxis::Window => "data.window",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Rounds => "rounds",
            SweepAxis::Split => "split",
            SweepAxis::Window => "window",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rounds" => Ok(SweepAxis::Rounds),
            "split" => Ok(SweepAxis::Split),
            "window" => Ok(SweepAxis::Window),
            other => Err(Error::config(
                "axis",
                format!("expected rounds, split or window, got `{other}`"),
            )),
        }
    }
}

/// One completed sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: String,
    /// Output sub-directory, relative to the sweep directory.
    pub dir: String,
    /// Windows per vehicle before splitting.
    pub n_windows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub value: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub axis: SweepAxis,
    pub values: Vec<String>,
    pub vehicles: Vec<String>,
    pub points: Vec<SweepPoint>,
    /// Table header after the vehicle column.
    pub columns: Vec<String>,
    /// Test MAE per vehicle and column; `None` where a point did not finish.
    pub mae: Vec<Vec<Option<f64>>>,
    /// Set when a point failed; earlier points are kept.
    pub failed: Option<SweepFailure>,
}

impl SweepReport {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
        {
            Some(v) if v == u64::from(SWEEP_SCHEMA_VERSION) => Ok(serde_json::from_value(value)?),
            Some(v) => Err(Error::Report(format!(
                "sweep schema version {v} is not supported (expected {SWEEP_SCHEMA_VERSION})"
            ))),
            None => Err(Error::Report("missing schema_version".into())),
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("sweep.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;

        let path = dir.join(format!("sweep_{}.csv", self.axis));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(std::iter::once("vehicle").chain(self.columns.iter().map(String::as_str)))?;
        for (v, row) in self.vehicles.iter().zip(&self.mae) {
            let cells = row
                .iter()
                .map(|m| m.map(|x| x.to_string()).unwrap_or_default());
            w.write_record(std::iter::once(v.clone()).chain(cells))?;
        }
        w.flush()
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;

        if self.axis == SweepAxis::Window {
            let path = dir.join("sweep_window_counts.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(
                std::iter::once("vehicle").chain(self.points.iter().map(|p| p.value.as_str())),
            )?;
            for (i, v) in self.vehicles.iter().enumerate() {
                let cells = self.points.iter().map(|p| p.n_windows[i].to_string());
                w.write_record(std::iter::once(v.clone()).chain(cells))?;
            }
            w.flush()
                .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        }
        Ok(())
    }
}

fn point_dir(axis: SweepAxis, value: &str) -> String {
    format!("{axis}_{}", value.replace(':', "-"))
}

fn final_column(report: &ExperimentReport) -> Vec<Option<f64>> {
    let fin = report.selected_test_mae(report.rounds);
    report
        .clients
        .iter()
        .map(|c| {
            fin.as_ref()
                .and_then(|v| v.iter().find(|(id, _)| *id == c.id).map(|(_, m)| *m))
        })
        .collect()
}

/// Runs the sweep under `output.dir`. Every value is validated before the
/// first run. The rounds axis is a single run with the largest count,
/// tabulated at every requested round. If a run fails, `sweep.json` keeps
/// the finished points and names the failure, and the error is returned.
pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::config("values", "sweep needs at least one value"));
    }
    if matches!(cfg.topology, TopologyMode::Case6 { .. }) {
        return Err(Error::config("topology.mode", "case6 cannot be swept"));
    }
    let values: Vec<String> = values.iter().map(|v| v.trim().to_string()).collect();
    let configs: Vec<ExperimentConfig> = match axis {
        SweepAxis::Rounds => {
            let rounds: Vec<u64> = values
                .iter()
                .map(|v| match v.parse::<u64>() {
                    Ok(r) if r > 0 => Ok(r),
                    _ => Err(Error::config(
                        "fl.rounds",
                        format!("sweep value `{v}` is not a positive count"),
                    )),
                })
                .collect::<Result<_>>()?;
            let max = *rounds.iter().max().expect("non-empty");
            let table = rounds
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(",");
            vec![cfg
                .with("fl.rounds", max.to_string())?
                .with("report.table_rounds", table)?]
        }
        SweepAxis::Split => {
            for v in &values {
                v.parse::<SplitSpec>()?;
            }
            values
                .iter()
                .map(|v| cfg.with(axis.key(), v.clone()))
                .collect::<Result<_>>()?
        }
        SweepAxis::Window => values
            .iter()
            .map(|v| cfg.with(axis.key(), v.clone()))
            .collect::<Result<_>>()?,
    };
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;

    let mut sweep = SweepReport {
        schema_version: SWEEP_SCHEMA_VERSION,
        axis,
        values: values.clone(),
        vehicles: Vec::new(),
        points: Vec::new(),
        columns: Vec::new(),
        mae: Vec::new(),
        failed: None,
    };
    let labels: Vec<String> = match axis {
        SweepAxis::Rounds => vec![point_dir(axis, &configs[0].rounds.to_string())],
        _ => values.iter().map(|v| point_dir(axis, v)).collect(),
    };
    let mut columns: Vec<Vec<Option<f64>>> = Vec::new();
    for (i, (point_cfg, sub)) in configs.iter().zip(&labels).enumerate() {
        let result = run_into(point_cfg, &dir.join(sub));
        let report = match result {
            Ok(mut reports) => reports.remove(0),
            Err(e) => {
                let value = if axis == SweepAxis::Rounds {
                    values.join(",")
                } else {
                    values[i].clone()
                };
                sweep.failed = Some(SweepFailure {
                    value,
                    error: e.to_string(),
                });
                fill_table(&mut sweep, axis, &columns);
                sweep.write(dir)?;
                return Err(e);
            }
        };
        if sweep.vehicles.is_empty() {
            sweep.vehicles = report.clients.iter().map(|c| c.id.clone()).collect();
        }
        sweep.points.push(SweepPoint {
            value: if axis == SweepAxis::Rounds {
                values.join(",")
            } else {
                values[i].clone()
            },
            dir: sub.clone(),
            n_windows: report.clients.iter().map(|c| c.n_windows).collect(),
        });
        match axis {
            SweepAxis::Rounds => {
                let (_, rows) = report.rounds_table();
                for k in 0..=report.table_rounds.len() {
                    columns.push(rows.iter().map(|(_, v)| v[k]).collect());
                }
            }
            _ => columns.push(final_column(&report)),
        }
    }
    fill_table(&mut sweep, axis, &columns);
    sweep.write(dir)?;
    Ok(sweep)
}

fn fill_table(sweep: &mut SweepReport, axis: SweepAxis, columns: &[Vec<Option<f64>>]) {
    sweep.columns = match axis {
        SweepAxis::Rounds => std::iter::once("baseline".to_string())
            .chain(sweep.values.iter().cloned())
            .collect(),
        _ => sweep.values.clone(),
    };
    sweep.mae = (0..sweep.vehicles.len())
        .map(|i| {
            (0..sweep.columns.len())
                .map(|k| columns.get(k).and_then(|c| c[i]))
                .collect()
        })
        .collect();
}
