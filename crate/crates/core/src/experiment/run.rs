//! `gen-data` and `run`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, TopologyMode};
use crate::battery::{generate_fleet, write_fleet, SyntheticFleetSpec};
use crate::data::{load_trip_csv, TripRecord};
use crate::nn::{save_checkpoint, Checkpoint};
use crate::topology::{
    case6_groups, natural_id_order, prepare_fleet, run_centralized_with, run_decentralized_with,
    select_performers, train_baselines, ExperimentReport, Fleet, RunOutcome, RunSpec,
};
use crate::{Error, Result};

/// Trip records of the configured source, in natural id order for CSVs.
pub fn load_records(cfg: &ExperimentConfig) -> Result<Vec<TripRecord>> {
    match &cfg.source {
        DataSource::Synthetic {
            fleet_size,
            seed,
            duration,
        } => {
            let spec = SyntheticFleetSpec {
                size: *fleet_size,
                seed: *seed,
                duration: *duration,
            };
            Ok(generate_fleet(&spec)?
                .into_iter()
                .map(|t| t.record)
                .collect())
        }
        DataSource::Csv { columns } => {
            let dir = &cfg.data_dir;
            let entries = fs::read_dir(dir)
                .map_err(|e| Error::io(format!("reading {}", dir.display()), e))?;
            let mut paths: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
                .collect();
            if paths.is_empty() {
                return Err(Error::config(
                    "data.dir",
                    format!("no CSV files in {}", dir.display()),
                ));
            }
            paths.sort_by(|a, b| {
                let stem = |p: &Path| {
                    p.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default()
                };
                natural_id_order(&stem(a), &stem(b))
            });
            paths.iter().map(|p| load_trip_csv(p, columns)).collect()
        }
    }
}

/// Writes the synthetic fleet as one CSV per vehicle into `data.dir`.
pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let DataSource::Synthetic {
        fleet_size,
        seed,
        duration,
    } = cfg.source
    else {
        return Err(Error::config(
            "data.source",
            "gen-data needs the synthetic source",
        ));
    };
    let trips = generate_fleet(&SyntheticFleetSpec {
        size: fleet_size,
        seed,
        duration,
    })?;
    write_fleet(&trips, &cfg.data_dir)
}

pub fn run_spec(cfg: &ExperimentConfig) -> RunSpec {
    RunSpec {
        rounds: cfg.rounds,
        seed: cfg.seed,
        baseline: cfg.baseline,
        table_rounds: cfg.table_rounds.clone(),
        cross_eval: cfg.cross_eval,
        selection: cfg.selection,
        config: cfg.echo.clone(),
        ..RunSpec::new(cfg.arch.clone(), cfg.plan.clone())
    }
}

pub fn load_fleet(cfg: &ExperimentConfig) -> Result<Fleet> {
    prepare_fleet(&load_records(cfg)?, cfg.window(), cfg.split)
}

fn checkpoint(
    cfg: &ExperimentConfig,
    outcome: &RunOutcome,
    index: usize,
    phase: &str,
) -> Option<Checkpoint> {
    let params = match phase {
        "baseline" => outcome.baseline_models[index].clone(),
        _ => outcome.final_models[index].clone()?,
    };
    let report = &outcome.report;
    let tags = BTreeMap::from([
        ("vehicle".to_string(), report.clients[index].id.clone()),
        ("phase".to_string(), phase.to_string()),
        ("algorithm".to_string(), report.algorithm.to_string()),
        ("rounds".to_string(), report.rounds.to_string()),
        ("seed".to_string(), report.seed.to_string()),
    ]);
    Some(Checkpoint {
        arch: cfg.arch.clone(),
        params,
        tags,
    })
}

/// Report, tables, timing sidecar, resolved config and checkpoints.
pub fn write_outcome(cfg: &ExperimentConfig, outcome: &RunOutcome, dir: &Path) -> Result<()> {
    outcome.report.write(dir)?;
    outcome.report.write_timing(dir)?;
    let path = dir.join("config.toml");
    fs::write(&path, cfg.to_toml())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    if cfg.checkpoints {
        let ck = dir.join("checkpoints");
        fs::create_dir_all(&ck).map_err(|e| Error::io(format!("creating {}", ck.display()), e))?;
        for (i, c) in outcome.report.clients.iter().enumerate() {
            let phases: &[&str] = if outcome.report.rounds > 0 {
                &["baseline", "final"]
            } else {
                &["baseline"]
            };
            for &phase in phases {
                if let Some(ckpt) = checkpoint(cfg, outcome, i, phase) {
                    save_checkpoint(&ck.join(format!("{}.{phase}.ckpt", c.id)), &ckpt)?;
                }
            }
        }
    }
    Ok(())
}

/// How the good and weak performers were chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformerSelection {
    pub k: usize,
    /// `(id, baseline test MAE)` in ascending MAE order.
    pub ranking: Vec<(String, f64)>,
    pub good: Vec<String>,
    pub weak: Vec<String>,
}

fn write_case6_table(
    dir: &Path,
    sel: &PerformerSelection,
    reports: &[ExperimentReport],
) -> Result<()> {
    let path = dir.join("table_case6.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec![
        "vehicle".to_string(),
        "label".to_string(),
        "baseline".to_string(),
    ];
    header.extend(reports.iter().map(|r| r.groups[0].name.clone()));
    w.write_record(&header)?;
    let Some(first) = reports.first() else {
        return Ok(());
    };
    for c in &first.clients {
        let label = if sel.good.contains(&c.id) {
            "G"
        } else if sel.weak.contains(&c.id) {
            "W"
        } else {
            continue;
        };
        let mut rec = vec![
            c.id.clone(),
            label.to_string(),
            c.baseline_test_mae.to_string(),
        ];
        for r in reports {
            let fin = r
                .selected_test_mae(r.rounds)
                .and_then(|v| v.into_iter().find(|(id, _)| *id == c.id))
                .map(|(_, m)| m.to_string())
                .unwrap_or_default();
            rec.push(fin);
        }
        w.write_record(&rec)?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

fn run_case6(
    cfg: &ExperimentConfig,
    fleet: &Fleet,
    k: usize,
    dir: &Path,
) -> Result<Vec<ExperimentReport>> {
    if 2 * k > fleet.len() {
        return Err(Error::config(
            "topology.k",
            format!(
                "{k} good and {k} weak performers need at least {} vehicles",
                2 * k
            ),
        ));
    }
    let spec = run_spec(cfg);
    let baselines = train_baselines(fleet, &spec)?;
    let maes: Vec<(String, f64)> = baselines
        .metrics
        .iter()
        .map(|m| (m.id.clone(), m.test_mae))
        .collect();
    let (good, weak) = select_performers(&maes, k)?;
    let mut ranking = maes.clone();
    ranking.sort_by(|a, b| a.1.total_cmp(&b.1));
    let sel = PerformerSelection {
        k,
        ranking,
        good: good.clone(),
        weak: weak.clone(),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let path = dir.join("case6.json");
    let mut text = serde_json::to_string_pretty(&sel)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;

    let mut reports = Vec::new();
    for groups in case6_groups(&good, &weak)? {
        let outcome = run_decentralized_with(fleet, &groups, &spec, &baselines)?;
        write_outcome(cfg, &outcome, &dir.join(&groups.groups[0].name))?;
        reports.push(outcome.report);
    }
    write_case6_table(dir, &sel, &reports)?;
    Ok(reports)
}

/// Runs the configured experiment and writes everything under `output.dir`.
/// Case 6 writes one sub-directory per group composition.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<ExperimentReport>> {
    run_into(cfg, &cfg.output_dir)
}

pub(crate) fn run_into(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<ExperimentReport>> {
    let fleet = load_fleet(cfg)?;
    let spec = run_spec(cfg);
    if let TopologyMode::Decentralized(groups) = &cfg.topology {
        let known: Vec<&str> = fleet.clients.iter().map(|c| c.id.as_str()).collect();
        let members = groups.groups.iter().flat_map(|g| &g.members);
        if let Some(m) = members.into_iter().find(|m| !known.contains(&m.as_str())) {
            return Err(Error::config(
                "topology.groups",
                format!("unknown vehicle `{m}`"),
            ));
        }
    }
    match &cfg.topology {
        TopologyMode::Case6 { k } => run_case6(cfg, &fleet, *k, dir),
        mode => {
            let baselines = train_baselines(&fleet, &spec)?;
            let outcome = match mode {
                TopologyMode::Decentralized(groups) => {
                    run_decentralized_with(&fleet, groups, &spec, &baselines)?
                }
                _ => run_centralized_with(&fleet, &spec, &baselines)?,
            };
            write_outcome(cfg, &outcome, dir)?;
            Ok(vec![outcome.report])
        }
    }
}
