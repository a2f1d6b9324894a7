//! Config-driven runs, sweeps and rendered tables on a tiny fleet.

use std::fs;
use std::path::{Path, PathBuf};

use evfl_core::experiment::{
    build_tables, cmd_gen_data, cmd_report, cmd_run, cmd_sweep, ExperimentConfig, SweepAxis,
    SweepReport,
};
use evfl_core::topology::ExperimentReport;
use evfl_core::Error;

fn config(out: &Path, extra: &[(&str, &str)]) -> ExperimentConfig {
    let kv: Vec<(String, String)> = [
        ("data.fleet_size", "3"),
        ("data.seed", "5"),
        ("data.duration", "200"),
        ("data.window", "8"),
        ("model.hidden", "4,3,3"),
        ("fl.rounds", "2"),
        ("fl.local_epochs", "1"),
        ("fl.batch_size", "32"),
        ("baseline.epochs", "2"),
        ("baseline.batch_size", "32"),
        ("model.arch", "gru"),
        ("output.dir", out.to_str().unwrap()),
    ]
    .iter()
    .chain(extra)
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    ExperimentConfig::load(None, &kv).unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .unwrap();
    r.records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn run_writes_report_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        &[("fl.rounds", "3"), ("report.table_rounds", "1,3")],
    );
    let reports = cmd_run(&cfg).unwrap();
    assert_eq!(reports.len(), 1);
    for f in [
        "report.json",
        "per_round.csv",
        "table_rounds.csv",
        "cross_eval.csv",
        "timing.csv",
        "config.toml",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    for v in ["V1", "V2", "V3"] {
        assert!(dir
            .path()
            .join(format!("checkpoints/{v}.final.ckpt"))
            .is_file());
    }
    let table = read_csv(&dir.path().join("table_rounds.csv"));
    assert_eq!(table[0], ["vehicle", "baseline", "1", "3"]);
    assert_eq!(table.len(), 4);
    let loaded = ExperimentReport::load(&dir.path().join("report.json")).unwrap();
    assert_eq!(loaded.to_json().unwrap(), reports[0].to_json().unwrap());
    assert_eq!(loaded.config, cfg.echo);

    let echoed = ExperimentConfig::load(Some(&dir.path().join("config.toml")), &[]).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn zero_rounds_is_the_baseline_run() {
    let dir = tempfile::tempdir().unwrap();
    let r = &cmd_run(&config(dir.path(), &[("fl.rounds", "0")])).unwrap()[0];
    assert!(r.history.is_empty());
    let table = read_csv(&dir.path().join("table_rounds.csv"));
    assert_eq!(table[0], ["vehicle", "baseline"]);
    assert!(!dir.path().join("checkpoints/V1.final.ckpt").exists());
    assert!(dir.path().join("checkpoints/V1.baseline.ckpt").exists());
}

#[test]
fn prox_without_penalty_matches_avg_columns() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let avg = &cmd_run(&config(a.path(), &[("fl.algorithm", "avg")])).unwrap()[0];
    let prox = &cmd_run(&config(
        b.path(),
        &[("fl.algorithm", "prox"), ("fl.mu", "0")],
    ))
    .unwrap()[0];
    assert_eq!(avg.history, prox.history);
    assert_eq!(
        fs::read(a.path().join("table_rounds.csv")).unwrap(),
        fs::read(b.path().join("table_rounds.csv")).unwrap()
    );
    let tables = build_tables(&[a.path().to_path_buf(), b.path().to_path_buf()]).unwrap();
    assert_eq!(tables.len(), 2);
    assert_eq!(tables[0].rows, tables[1].rows);
    assert_eq!(tables[0].best(), tables[1].best());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[]);
    cmd_run(&cfg).unwrap();
    let first = snapshot(dir.path());
    cmd_run(&cfg).unwrap();
    assert_eq!(first, snapshot(dir.path()));
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timing.csv" {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn rounds_sweep_has_baseline_and_one_column_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[]);
    let values: Vec<String> = ["1", "2", "3"].map(String::from).to_vec();
    let s = cmd_sweep(&cfg, SweepAxis::Rounds, &values).unwrap();
    assert_eq!(s.columns, ["baseline", "1", "2", "3"]);
    assert!(s.failed.is_none());
    let table = read_csv(&dir.path().join("sweep_rounds.csv"));
    assert_eq!(table[0], ["vehicle", "baseline", "1", "2", "3"]);
    assert_eq!(table.len(), 4);
    let run = ExperimentReport::load(&dir.path().join("rounds_3/report.json")).unwrap();
    for (i, c) in run.clients.iter().enumerate() {
        assert_eq!(s.mae[i][0], Some(c.baseline_test_mae));
        assert_eq!(s.mae[i][2], Some(run.round(2).unwrap().clients[i].test_mae));
    }
}

#[test]
fn window_sweep_records_window_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[("fl.rounds", "1")]);
    let values: Vec<String> = ["4", "8", "12"].map(String::from).to_vec();
    let s = cmd_sweep(&cfg, SweepAxis::Window, &values).unwrap();
    let counts: Vec<usize> = s.points.iter().map(|p| p.n_windows[0]).collect();
    assert_eq!(counts, [197, 193, 189]);
    let csv = read_csv(&dir.path().join("sweep_window_counts.csv"));
    assert_eq!(csv[0], ["vehicle", "4", "8", "12"]);
    assert_eq!(csv[1], ["V1", "197", "193", "189"]);
    let back = SweepReport::from_json(&fs::read_to_string(dir.path().join("sweep.json")).unwrap())
        .unwrap();
    assert_eq!(back, s);
}

#[test]
fn split_sweep_keeps_every_window() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[("fl.rounds", "1")]);
    let values: Vec<String> = ["4:1:5", "8:1:1"].map(String::from).to_vec();
    let s = cmd_sweep(&cfg, SweepAxis::Split, &values).unwrap();
    for p in &s.points {
        let r = ExperimentReport::load(&dir.path().join(&p.dir).join("report.json")).unwrap();
        for c in &r.clients {
            assert_eq!(c.n_train + c.n_val + c.n_test, c.n_windows);
        }
    }
    assert_eq!(s.points[0].dir, "split_4-1-5");
}

#[test]
fn failed_sweep_keeps_finished_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[("fl.rounds", "1")]);
    let values: Vec<String> = ["8", "500"].map(String::from).to_vec();
    assert!(cmd_sweep(&cfg, SweepAxis::Window, &values).is_err());
    let s = SweepReport::from_json(&fs::read_to_string(dir.path().join("sweep.json")).unwrap())
        .unwrap();
    assert_eq!(s.points.len(), 1);
    assert_eq!(s.failed.as_ref().unwrap().value, "500");
    assert!(s.mae.iter().all(|row| row[0].is_some() && row[1].is_none()));
}

#[test]
fn sweep_values_are_validated_up_front() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[]);
    let bad: Vec<String> = ["4:1:5", "9:9"].map(String::from).to_vec();
    assert!(cmd_sweep(&cfg, SweepAxis::Split, &bad)
        .unwrap_err()
        .is_validation());
    let zero: Vec<String> = ["0"].map(String::from).to_vec();
    assert!(cmd_sweep(&cfg, SweepAxis::Rounds, &zero)
        .unwrap_err()
        .is_validation());
    assert!(!dir.path().join("sweep.json").exists());
}

#[test]
fn reports_with_different_seeds_merge() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = &cmd_run(&config(a.path(), &[("seed", "1")])).unwrap()[0];
    let rb = &cmd_run(&config(b.path(), &[("seed", "2")])).unwrap()[0];
    let tables = build_tables(&[a.path().join("report.json"), b.path().to_path_buf()]).unwrap();
    assert_eq!(tables.len(), 1);
    let t = &tables[0];
    assert_eq!(t.runs, 2);
    let (x, y) = (
        ra.clients[0].baseline_test_mae,
        rb.clients[0].baseline_test_mae,
    );
    let cell = t.rows[0].1[0].unwrap();
    assert_eq!(cell.mean, (x + y) / 2.0);
    assert!((cell.spread - (x - y).abs() / 2f64.sqrt()).abs() < 1e-12);

    let out = tempfile::tempdir().unwrap();
    let text = cmd_report(
        &[a.path().to_path_buf(), b.path().to_path_buf()],
        Some(out.path()),
    )
    .unwrap();
    assert!(text.contains(" ± "));
    let csv = read_csv(&out.path().join("table_1.csv"));
    assert_eq!(
        csv[0],
        [
            "vehicle",
            "baseline_mean",
            "baseline_spread",
            "2_mean",
            "2_spread",
            "best"
        ]
    );
}

#[test]
fn report_rejects_other_schema_versions() {
    let dir = tempfile::tempdir().unwrap();
    cmd_run(&config(dir.path(), &[("fl.rounds", "0")])).unwrap();
    let path = dir.path().join("report.json");
    let text = fs::read_to_string(&path)
        .unwrap()
        .replace("\"schema_version\": 1", "\"schema_version\": 99");
    fs::write(&path, text).unwrap();
    match cmd_report(&[path], None) {
        Err(Error::Report(msg)) => assert!(msg.contains("schema version 99"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn best_validation_selection_changes_only_the_tables() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fin = &cmd_run(&config(a.path(), &[("fl.rounds", "3")])).unwrap()[0];
    let best = &cmd_run(&config(
        b.path(),
        &[("fl.rounds", "3"), ("report.select", "best_val")],
    ))
    .unwrap()[0];
    assert_eq!(fin.history, best.history);
    let (_, rows) = best.rounds_table();
    for (i, (_, cells)) in rows.iter().enumerate() {
        let pick = fin
            .history
            .iter()
            .map(|r| &r.clients[i])
            .min_by(|x, y| x.val_mae.total_cmp(&y.val_mae))
            .unwrap();
        assert_eq!(cells[1], Some(pick.test_mae));
    }
}

#[test]
fn unknown_group_member_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        &[
            ("topology.mode", "decentralized"),
            ("topology.groups", "V1,V2;V7"),
        ],
    );
    let err = cmd_run(&cfg).unwrap_err();
    assert!(err.is_validation(), "{err}");
    assert!(err.to_string().contains("V7"));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn case6_runs_every_composition() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        &[
            ("data.fleet_size", "4"),
            ("topology.mode", "case6"),
            ("topology.k", "2"),
            ("fl.rounds", "1"),
            ("model.arch", "ann"),
        ],
    );
    let reports = cmd_run(&cfg).unwrap();
    let names: Vec<&str> = reports.iter().map(|r| r.groups[0].name.as_str()).collect();
    assert_eq!(names, ["0G+2W", "1G+1W", "2G+0W"]);
    for n in &names {
        assert!(dir.path().join(n).join("report.json").is_file());
    }
    let table = read_csv(&dir.path().join("table_case6.csv"));
    assert_eq!(
        table[0],
        ["vehicle", "label", "baseline", "0G+2W", "1G+1W", "2G+0W"]
    );
    assert_eq!(table.len(), 5);
    let too_many = cfg.with("topology.k", "3").unwrap();
    assert!(cmd_run(&too_many).unwrap_err().is_validation());
}

#[test]
fn gen_data_writes_one_file_per_vehicle() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cfg = config(
        dir.path(),
        &[
            ("data.dir", data.to_str().unwrap()),
            ("data.duration", "1800"),
        ],
    );
    let files = cmd_gen_data(&cfg).unwrap();
    assert_eq!(files.len(), 3);
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(f).unwrap()).collect();
    cmd_gen_data(&cfg).unwrap();
    let again: Vec<Vec<u8>> = files.iter().map(|f| fs::read(f).unwrap()).collect();
    assert_eq!(first, again);
    for f in &files {
        assert_eq!(read_csv(f).len(), 1801);
    }

    let csv_cfg = cfg
        .with("data.source", "csv")
        .unwrap()
        .with("data.duration", "200")
        .unwrap();
    let from_files = &cmd_run(&csv_cfg.with("fl.rounds", "0").unwrap()).unwrap()[0];
    assert_eq!(from_files.clients.len(), 3);
    assert_eq!(from_files.clients[0].n_windows, 1800 - 8 + 1);
}
