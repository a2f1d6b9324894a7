//! Experiment reports: a versioned JSON document plus flat CSV tables.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::performers::{Group, Performer};
use crate::fl::Algorithm;
use crate::nn::ArchKind;
use crate::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Centralized,
    Decentralized,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Centralized => "centralized",
            Topology::Decentralized => "decentralized",
        })
    }
}

/// Which round's test MAE a table shows for a tabulated round `r`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaeSelection {
    /// The test MAE after round `r`.
    #[default]
    Final,
    /// The test MAE at the round in `1..=r` with the lowest validation MAE,
    /// chosen per client; ties keep the earlier round.
    BestVal,
}

impl fmt::Display for MaeSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaeSelection::Final => "final",
            MaeSelection::BestVal => "best_val",
        })
    }
}

impl std::str::FromStr for MaeSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "final" => Ok(MaeSelection::Final),
            "best_val" => Ok(MaeSelection::BestVal),
            other => Err(Error::param(
                "selection",
                format!("expected final or best_val, got `{other}`"),
            )),
        }
    }
}

/// Validation and test MAE of one client's model, Wh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMetrics {
    pub id: String,
    pub val_mae: f64,
    pub test_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSummary {
    pub id: String,
    pub n_windows: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Delay of energy behind speed, seconds.
    pub lag_s: Option<usize>,
    /// Local-baseline model ("0 rounds").
    pub baseline_val_mae: f64,
    pub baseline_test_mae: f64,
}

/// Metrics of every participating client after one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub clients: Vec<ClientMetrics>,
}

/// Entry `(i, j)` is the test MAE of client `i`'s model on client `j`'s
/// test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEval {
    pub ids: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub row_means: Vec<f64>,
}

impl CrossEval {
    pub fn new(ids: Vec<String>, matrix: Vec<Vec<f64>>) -> Result<Self> {
        if matrix.len() != ids.len() || matrix.iter().any(|r| r.len() != ids.len()) {
            return Err(Error::Shape(
                "cross-evaluation matrix must be square over the clients".into(),
            ));
        }
        let row_means = matrix
            .iter()
            .map(|r| r.iter().sum::<f64>() / r.len() as f64)
            .collect();
        Ok(Self {
            ids,
            matrix,
            row_means,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub topology: Topology,
    pub arch: ArchKind,
    pub algorithm: Algorithm,
    pub rounds: u64,
    pub window: usize,
    pub split: String,
    pub seed: u64,
    /// Configuration echo, flat dotted keys.
    pub config: BTreeMap<String, String>,
    pub clients: Vec<ClientSummary>,
    /// Peer groups of a decentralized run.
    pub groups: Vec<Group>,
    pub history: Vec<RoundRecord>,
    /// Rounds tabulated in `table_rounds.csv`.
    pub table_rounds: Vec<u64>,
    #[serde(default)]
    pub selection: MaeSelection,
    pub cross_eval_baseline: Option<CrossEval>,
    pub cross_eval_final: Option<CrossEval>,
    /// Wall-clock seconds of the baseline phase and of each round. Kept out
    /// of the document so reports stay byte-identical across executions.
    #[serde(skip)]
    pub baseline_seconds: f64,
    #[serde(skip)]
    pub round_seconds: Vec<f64>,
}

impl ExperimentReport {
    pub fn client(&self, id: &str) -> Option<&ClientSummary> {
        self.clients.iter().find(|c| c.id == id)
    }

    pub fn round(&self, round: u64) -> Option<&RoundRecord> {
        self.history.iter().find(|r| r.round == round)
    }

    pub fn final_round(&self) -> Option<&RoundRecord> {
        self.history.last()
    }

    /// Test MAE per client after `round`; round 0 is the local baseline.
    pub fn test_mae_at(&self, round: u64) -> Option<Vec<(String, f64)>> {
        if round == 0 {
            return Some(
                self.clients
                    .iter()
                    .map(|c| (c.id.clone(), c.baseline_test_mae))
                    .collect(),
            );
        }
        self.round(round).map(|r| {
            r.clients
                .iter()
                .map(|c| (c.id.clone(), c.test_mae))
                .collect()
        })
    }

    /// Test MAE per client for tabulated round `round` under the report's
    /// selection rule.
    pub fn selected_test_mae(&self, round: u64) -> Option<Vec<(String, f64)>> {
        if round == 0 || self.selection == MaeSelection::Final {
            return self.test_mae_at(round);
        }
        self.round(round)?;
        let upto: Vec<&RoundRecord> = self.history.iter().filter(|r| r.round <= round).collect();
        let ids: Vec<&String> = upto.last()?.clients.iter().map(|c| &c.id).collect();
        Some(
            ids.into_iter()
                .map(|id| {
                    let best = upto
                        .iter()
                        .filter_map(|r| r.clients.iter().find(|c| &c.id == id))
                        .fold(None::<&ClientMetrics>, |b, c| match b {
                            Some(b) if b.val_mae <= c.val_mae => Some(b),
                            _ => Some(c),
                        })
                        .expect("client present in its last round");
                    (id.clone(), best.test_mae)
                })
                .collect(),
        )
    }

    fn label_of(&self, id: &str) -> (Option<&str>, Option<Performer>) {
        for g in &self.groups {
            if let Some(k) = g.members.iter().position(|m| m == id) {
                return (Some(g.name.as_str()), g.labels[k]);
            }
        }
        (None, None)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses a report, rejecting other schema versions.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
        {
            Some(v) if v == u64::from(REPORT_SCHEMA_VERSION) => Ok(serde_json::from_value(value)?),
            Some(v) => Err(Error::Report(format!(
                "schema version {v} is not supported (expected {REPORT_SCHEMA_VERSION})"
            ))),
            None => Err(Error::Report("missing schema_version".into())),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Report(r) => Error::Report(format!("{}: {r}", path.display())),
            other => other,
        })
    }

    /// Writes `report.json` and the CSV tables into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let path = dir.join("report.json");
        fs::write(&path, self.to_json()?)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        self.write_per_round(&dir.join("per_round.csv"))?;
        self.write_rounds_table(&dir.join("table_rounds.csv"))?;
        if self.cross_eval_baseline.is_some() || self.cross_eval_final.is_some() {
            self.write_cross_eval(&dir.join("cross_eval.csv"))?;
        }
        if !self.groups.is_empty() {
            self.write_decentralized(&dir.join("table_decentralized.csv"))?;
        }
        Ok(())
    }

    /// Writes the wall-clock sidecar `timing.csv`.
    pub fn write_timing(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join("timing.csv"))?;
        w.write_record(["round", "seconds"])?;
        w.write_record(["0".to_string(), self.baseline_seconds.to_string()])?;
        for (r, s) in self.round_seconds.iter().enumerate() {
            w.write_record([(r + 1).to_string(), s.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("writing timing.csv", e))?;
        Ok(())
    }

    fn write_per_round(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["round", "vehicle", "val_mae", "test_mae"])?;
        for c in &self.clients {
            w.write_record([
                "0",
                &c.id,
                &c.baseline_val_mae.to_string(),
                &c.baseline_test_mae.to_string(),
            ])?;
        }
        for r in &self.history {
            for c in &r.clients {
                w.write_record([
                    r.round.to_string(),
                    c.id.clone(),
                    c.val_mae.to_string(),
                    c.test_mae.to_string(),
                ])?;
            }
        }
        w.flush()
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(())
    }

    /// Vehicles by `{baseline, R rounds...}` test MAE.
    pub fn rounds_table(&self) -> (Vec<String>, Vec<(String, Vec<Option<f64>>)>) {
        let mut header = vec!["baseline".to_string()];
        header.extend(self.table_rounds.iter().map(|r| format!("{r}")));
        let columns: Vec<Option<Vec<(String, f64)>>> = std::iter::once(0)
            .chain(self.table_rounds.iter().copied())
            .map(|r| self.selected_test_mae(r))
            .collect();
        let rows = self
            .clients
            .iter()
            .map(|c| {
                let vals = columns
                    .iter()
                    .map(|col| {
                        col.as_ref()
                            .and_then(|v| v.iter().find(|(id, _)| *id == c.id).map(|(_, m)| *m))
                    })
                    .collect();
                (c.id.clone(), vals)
            })
            .collect();
        (header, rows)
    }

    fn write_rounds_table(&self, path: &Path) -> Result<()> {
        let (header, rows) = self.rounds_table();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(std::iter::once("vehicle".to_string()).chain(header))?;
        for (id, vals) in rows {
            let cells = vals
                .iter()
                .map(|v| v.map(|x| x.to_string()).unwrap_or_default());
            w.write_record(std::iter::once(id).chain(cells))?;
        }
        w.flush()
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(())
    }

    fn write_cross_eval(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let ids = &self
            .cross_eval_baseline
            .as_ref()
            .or(self.cross_eval_final.as_ref())
            .expect("checked by caller")
            .ids;
        let mut header = vec!["phase".to_string(), "model".to_string()];
        header.extend(ids.iter().cloned());
        header.push("mean".into());
        w.write_record(&header)?;
        for (phase, ce) in [
            ("baseline", &self.cross_eval_baseline),
            ("final", &self.cross_eval_final),
        ] {
            let Some(ce) = ce else { continue };
            for ((id, row), mean) in ce.ids.iter().zip(&ce.matrix).zip(&ce.row_means) {
                let mut rec = vec![phase.to_string(), id.clone()];
                rec.extend(row.iter().map(f64::to_string));
                rec.push(mean.to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush()
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(())
    }

    fn write_decentralized(&self, path: &Path) -> Result<()> {
        let finals = self.selected_test_mae(self.rounds);
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["group", "vehicle", "label", "baseline", "final"])?;
        for c in &self.clients {
            let (Some(group), label) = self.label_of(&c.id) else {
                continue;
            };
            let fin = finals
                .as_ref()
                .and_then(|v| {
                    v.iter()
                        .find(|(id, _)| *id == c.id)
                        .map(|(_, m)| m.to_string())
                })
                .unwrap_or_default();
            let label = match label {
                Some(Performer::G) => "G",
                Some(Performer::W) => "W",
                None => "",
            };
            w.write_record([group, &c.id, label, &c.baseline_test_mae.to_string(), &fin])?;
        }
        w.flush()
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(())
    }
}
