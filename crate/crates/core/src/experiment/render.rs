//! `report`: plain-text and CSV tables from saved reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::sweep::SweepReport;
use crate::topology::ExperimentReport;
use crate::{Error, Result};

/// Echo keys that may differ between runs merged into one table.
const MERGE_FREE_KEYS: [&str; 2] = ["seed", "output.dir"];

/// One table cell: the mean over merged runs and the sample standard
/// deviation (`0` for a single run).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub mean: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    /// Number of runs merged into the table.
    pub runs: usize,
    pub columns: Vec<String>,
    /// `(vehicle, cells)`; a missing cell is `None`.
    pub rows: Vec<(String, Vec<Option<Cell>>)>,
}

impl Table {
    /// Column index of the lowest mean MAE in each row; ties keep the first.
    pub fn best(&self) -> Vec<Option<usize>> {
        self.rows
            .iter()
            .map(|(_, cells)| {
                cells
                    .iter()
                    .enumerate()
                    .filter_map(|(k, c)| c.map(|c| (k, c.mean)))
                    .fold(None, |best: Option<(usize, f64)>, (k, m)| match best {
                        Some((_, b)) if b <= m => best,
                        _ => Some((k, m)),
                    })
                    .map(|(k, _)| k)
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let merged = self.runs > 1;
        let fmt = |c: &Option<Cell>, best: bool| -> String {
            let mark = if best { "*" } else { "" };
            match c {
                Some(c) if merged => format!("{:.4} ± {:.4}{mark}", c.mean, c.spread),
                Some(c) => format!("{:.4}{mark}", c.mean),
                None => "-".to_string(),
            }
        };
        let best = self.best();
        let mut grid: Vec<Vec<String>> = vec![std::iter::once("vehicle".to_string())
            .chain(self.columns.iter().cloned())
            .collect()];
        for ((id, cells), b) in self.rows.iter().zip(&best) {
            let mut line = vec![id.clone()];
            line.extend(cells.iter().enumerate().map(|(k, c)| fmt(c, *b == Some(k))));
            grid.push(line);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|k| grid.iter().map(|r| r[k].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        writeln!(out, "{}", self.title).expect("string write");
        for row in &grid {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(k, (s, w))| {
                    let pad = w - s.chars().count();
                    if k == 0 {
                        format!("{s}{}", " ".repeat(pad))
                    } else {
                        format!("{}{s}", " ".repeat(pad))
                    }
                })
                .collect();
            writeln!(out, "{}", cells.join("  ").trim_end()).expect("string write");
        }
        out.push_str("* lowest MAE (Wh) in the row\n");
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let merged = self.runs > 1;
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["vehicle".to_string()];
        for c in &self.columns {
            if merged {
                header.push(format!("{c}_mean"));
                header.push(format!("{c}_spread"));
            } else {
                header.push(c.clone());
            }
        }
        header.push("best".to_string());
        w.write_record(&header)?;
        for ((id, cells), b) in self.rows.iter().zip(self.best()) {
            let mut rec = vec![id.clone()];
            for c in cells {
                rec.push(c.map(|c| c.mean.to_string()).unwrap_or_default());
                if merged {
                    rec.push(c.map(|c| c.spread.to_string()).unwrap_or_default());
                }
            }
            rec.push(b.map(|k| self.columns[k].clone()).unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush()
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

enum Loaded {
    Run(ExperimentReport, PathBuf),
    Sweep(SweepReport, PathBuf),
}

fn load(path: &Path) -> Result<Loaded> {
    if !path.exists() {
        return Err(Error::Report(format!("{} does not exist", path.display())));
    }
    let file = if path.is_dir() {
        ["report.json", "sweep.json"]
            .iter()
            .map(|f| path.join(f))
            .find(|p| p.is_file())
            .ok_or_else(|| {
                Error::Report(format!(
                    "no report.json or sweep.json in {}",
                    path.display()
                ))
            })?
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file)
        .map_err(|e| Error::io(format!("reading {}", file.display()), e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Report(format!("{}: {e}", file.display())))?;
    let with_path = |e: Error| Error::Report(format!("{}: {e}", file.display()));
    if value.get("axis").is_some() {
        Ok(Loaded::Sweep(
            SweepReport::from_json(&text).map_err(with_path)?,
            file,
        ))
    } else {
        Ok(Loaded::Run(
            ExperimentReport::from_json(&text).map_err(with_path)?,
            file,
        ))
    }
}

fn merge_key(report: &ExperimentReport) -> BTreeMap<String, String> {
    let mut key = report.config.clone();
    for k in MERGE_FREE_KEYS {
        key.remove(k);
    }
    key
}

fn mean_spread(values: &[f64]) -> Cell {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let spread = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Cell { mean, spread }
}

fn run_title(r: &ExperimentReport, seeds: &[u64], file: &Path) -> String {
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    let label = if seeds.len() > 1 { "seeds" } else { "seed" };
    format!(
        "{} {} {}, {} rounds, window {}, split {}, {label} {} ({})",
        r.topology,
        r.arch,
        r.algorithm,
        r.rounds,
        r.window,
        r.split,
        seeds.join(","),
        file.display()
    )
}

/// Merges runs that share every echoed config key except the seed and the
/// output directory.
fn run_table(runs: &[(&ExperimentReport, &Path)]) -> Result<Table> {
    let (first, file) = runs[0];
    let (columns, rows) = first.rounds_table();
    let tables: Vec<_> = runs.iter().map(|(r, _)| r.rounds_table()).collect();
    for ((r, p), (c, rs)) in runs.iter().zip(&tables) {
        let ids: Vec<&String> = rs.iter().map(|(id, _)| id).collect();
        if c != &columns || ids != rows.iter().map(|(id, _)| id).collect::<Vec<_>>() {
            return Err(Error::Report(format!(
                "{} has the same config as {} but a different table shape",
                p.display(),
                file.display()
            )));
        }
        debug_assert_eq!(merge_key(r), merge_key(first));
    }
    let rows = rows
        .iter()
        .enumerate()
        .map(|(i, (id, cells))| {
            let merged = (0..cells.len())
                .map(|k| {
                    let vals: Option<Vec<f64>> = tables.iter().map(|(_, rs)| rs[i].1[k]).collect();
                    vals.map(|v| mean_spread(&v))
                })
                .collect();
            (id.clone(), merged)
        })
        .collect();
    let seeds: Vec<u64> = runs.iter().map(|(r, _)| r.seed).collect();
    Ok(Table {
        title: run_title(first, &seeds, file),
        runs: runs.len(),
        columns,
        rows,
    })
}

fn sweep_table(s: &SweepReport, file: &Path) -> Table {
    let mut title = format!(
        "{} sweep over {} ({})",
        s.axis,
        s.values.join(", "),
        file.display()
    );
    if let Some(f) = &s.failed {
        write!(title, " [failed at {}: {}]", f.value, f.error).expect("string write");
    }
    Table {
        title,
        runs: 1,
        columns: s.columns.clone(),
        rows: s
            .vehicles
            .iter()
            .zip(&s.mae)
            .map(|(id, row)| {
                (
                    id.clone(),
                    row.iter()
                        .map(|m| m.map(|mean| Cell { mean, spread: 0.0 }))
                        .collect(),
                )
            })
            .collect(),
    }
}

/// Builds the tables for the given report files or directories, in input
/// order. Runs whose configs match apart from the seed merge into one table.
pub fn build_tables(paths: &[PathBuf]) -> Result<Vec<Table>> {
    if paths.is_empty() {
        return Err(Error::config("paths", "no report files given"));
    }
    let loaded: Vec<Loaded> = paths.iter().map(|p| load(p)).collect::<Result<_>>()?;
    let mut tables = Vec::new();
    let mut groups: Vec<(BTreeMap<String, String>, Vec<(&ExperimentReport, &Path)>)> = Vec::new();
    let mut order: Vec<Result<usize, usize>> = Vec::new();
    for (i, l) in loaded.iter().enumerate() {
        match l {
            Loaded::Run(r, p) => {
                let key = merge_key(r);
                match groups.iter().position(|(k, _)| *k == key) {
                    Some(g) => groups[g].1.push((r, p)),
                    None => {
                        order.push(Ok(groups.len()));
                        groups.push((key, vec![(r, p)]));
                    }
                }
            }
            Loaded::Sweep(..) => order.push(Err(i)),
        }
    }
    for o in order {
        match o {
            Ok(g) => tables.push(run_table(&groups[g].1)?),
            Err(i) => {
                if let Loaded::Sweep(s, p) = &loaded[i] {
                    tables.push(sweep_table(s, p));
                }
            }
        }
    }
    Ok(tables)
}

/// Renders every table as text. With `out`, also writes `table_<n>.csv`
/// and `tables.txt` there.
pub fn cmd_report(paths: &[PathBuf], out: Option<&Path>) -> Result<String> {
    let tables = build_tables(paths)?;
    let text = tables
        .iter()
        .map(Table::to_text)
        .collect::<Vec<_>>()
        .join("\n");
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        for (n, t) in tables.iter().enumerate() {
            t.write_csv(&dir.join(format!("table_{}.csv", n + 1)))?;
        }
        let path = dir.join("tables.txt");
        fs::write(&path, &text).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    Ok(text)
}
