//! Experiment configuration.
//!
//! A config file is flat dotted-key TOML (`fl.rounds = 15`). Every known key
//! has a default; the file and then `key=value` overrides replace them. The
//! resolved key map is what gets validated and echoed into reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{ColumnMap, SplitSpec};
use crate::fl::{Algorithm, AnchorMode, LocalMode, PartitionPolicy, RoundPlan};
use crate::nn::{ArchKind, ArchSpec, TrainConfig};
use crate::topology::{GroupSpec, MaeSelection};
use crate::{Error, Result};

/// Known keys and their defaults.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("data.source", "synthetic"),
    ("data.fleet_size", "10"),
    ("data.seed", "42"),
    ("data.duration", "1800"),
    ("data.dir", "data"),
    ("data.column.time", "time_s"),
    ("data.column.speed", "speed_mps"),
    ("data.column.acceleration", "accel_mps2"),
    ("data.column.distance", "distance_m"),
    ("data.column.energy", "energy_wh"),
    ("data.window", "60"),
    ("data.split", "8:1:1"),
    ("model.arch", "lstm"),
    ("model.hidden", "40,32,16"),
    ("model.dropout", "0.1,0.2"),
    ("model.output_scale", "1"),
    ("fl.algorithm", "avg"),
    ("fl.rounds", "15"),
    ("fl.local_epochs", "5"),
    ("fl.batch_size", "70"),
    ("fl.participation", "1"),
    ("fl.mu", "0.01"),
    ("fl.anchor", "previous_global"),
    ("fl.server_lr", "0.05"),
    ("fl.partition", "default"),
    ("fl.local_mode", "epochs"),
    ("baseline.epochs", "65"),
    ("baseline.batch_size", "70"),
    ("topology.mode", "centralized"),
    ("topology.groups", ""),
    ("topology.k", "3"),
    ("report.table_rounds", ""),
    ("report.cross_eval", "true"),
    ("report.select", "final"),
    ("output.dir", "out"),
    ("output.checkpoints", "true"),
];

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic {
        fleet_size: usize,
        seed: u64,
        duration: usize,
    },
    Csv {
        columns: ColumnMap,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologyMode {
    Centralized,
    Decentralized(GroupSpec),
    /// Good/weak performer compositions over `k` of each.
    Case6 {
        k: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    /// CSV input directory, and the output directory of `gen-data`.
    pub data_dir: PathBuf,
    pub split: SplitSpec,
    /// `window_len` is the window length `m`.
    pub arch: ArchSpec,
    pub plan: RoundPlan,
    pub rounds: u64,
    pub baseline: TrainConfig,
    pub topology: TopologyMode,
    pub table_rounds: Vec<u64>,
    pub cross_eval: bool,
    pub selection: MaeSelection,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub checkpoints: bool,
    /// Resolved key map.
    pub echo: BTreeMap<String, String>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, String>) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        let text = match v {
            toml::Value::Table(t) => {
                flatten(&key, t, out)?;
                continue;
            }
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            toml::Value::Array(items) => items
                .iter()
                .map(|i| match i {
                    toml::Value::String(s) => Ok(s.clone()),
                    toml::Value::Integer(i) => Ok(i.to_string()),
                    toml::Value::Float(f) => Ok(f.to_string()),
                    _ => Err(Error::config(
                        &key,
                        "arrays may hold only strings and numbers",
                    )),
                })
                .collect::<Result<Vec<_>>>()?
                .join(","),
            toml::Value::Datetime(_) => return Err(Error::config(&key, "dates are not supported")),
        };
        out.insert(key, text);
    }
    Ok(())
}

fn get<'a>(map: &'a BTreeMap<String, String>, key: &str) -> &'a str {
    map.get(key)
        .map(String::as_str)
        .expect("every known key has a default")
}

fn parse<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = get(map, key).trim();
    raw.parse()
        .map_err(|e: T::Err| Error::config(key, format!("cannot parse `{raw}`: {e}")))
}

fn list<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    get(map, key)
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|e: T::Err| Error::config(key, format!("cannot parse `{s}`: {e}")))
        })
        .collect()
}

/// Re-keys a module error as a configuration error on `key`.
fn at<T>(key: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { .. } => e,
        other => Error::config(key, other.to_string()),
    })
}

impl ExperimentConfig {
    /// Defaults only.
    pub fn defaults() -> Result<Self> {
        Self::from_map(BTreeMap::new())
    }

    /// Parses config text (flat dotted keys) and applies `overrides`.
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        let mut map = BTreeMap::new();
        flatten("", &table, &mut map)?;
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        Self::from_map(map)
    }

    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p)
                .map_err(|e| Error::io(format!("reading {}", p.display()), e))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    /// The same configuration with one key replaced.
    pub fn with(&self, key: &str, value: impl Into<String>) -> Result<Self> {
        let mut map = self.echo.clone();
        map.insert(key.to_string(), value.into());
        Self::from_map(map)
    }

    pub fn from_map(given: BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = given.keys().find(|k| !DEFAULTS.iter().any(|(d, _)| d == k)) {
            return Err(Error::config(k.as_str(), "unknown key"));
        }
        let mut map: BTreeMap<String, String> = DEFAULTS
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        map.extend(given);

        let source = match get(&map, "data.source").trim() {
            "synthetic" => DataSource::Synthetic {
                fleet_size: parse(&map, "data.fleet_size")?,
                seed: parse(&map, "data.seed")?,
                duration: parse(&map, "data.duration")?,
            },
            "csv" => DataSource::Csv {
                columns: ColumnMap {
                    time: get(&map, "data.column.time").to_string(),
                    speed: get(&map, "data.column.speed").to_string(),
                    acceleration: get(&map, "data.column.acceleration").to_string(),
                    distance: get(&map, "data.column.distance").to_string(),
                    energy: get(&map, "data.column.energy").to_string(),
                },
            },
            other => {
                return Err(Error::config(
                    "data.source",
                    format!("expected synthetic or csv, got `{other}`"),
                ))
            }
        };
        if let DataSource::Synthetic {
            fleet_size,
            duration,
            ..
        } = source
        {
            if fleet_size == 0 {
                return Err(Error::config("data.fleet_size", "must be >= 1"));
            }
            if duration < 2 {
                return Err(Error::config("data.duration", "must be >= 2 seconds"));
            }
        }

        let window: usize = parse(&map, "data.window")?;
        if window == 0 {
            return Err(Error::config("data.window", "must be >= 1"));
        }
        let kind: ArchKind = parse(&map, "model.arch")?;
        let mut arch = ArchSpec::new(kind, window)
            .with_hidden(list(&map, "model.hidden")?)
            .with_dropout(list(&map, "model.dropout")?);
        arch.output_scale = parse(&map, "model.output_scale")?;
        at("model", arch.validate())?;

        let plan = RoundPlan {
            algorithm: parse::<Algorithm>(&map, "fl.algorithm")?,
            server_lr: parse(&map, "fl.server_lr")?,
            local_epochs: parse(&map, "fl.local_epochs")?,
            batch_size: parse(&map, "fl.batch_size")?,
            participation: parse(&map, "fl.participation")?,
            mu: parse(&map, "fl.mu")?,
            anchor: parse::<AnchorMode>(&map, "fl.anchor")?,
            policy: parse::<PartitionPolicy>(&map, "fl.partition")?,
            local_mode: parse::<LocalMode>(&map, "fl.local_mode")?,
        };
        at("fl", plan.validate(1))?;
        let rounds: u64 = parse(&map, "fl.rounds")?;
        let baseline = TrainConfig {
            epochs: parse(&map, "baseline.epochs")?,
            batch_size: parse(&map, "baseline.batch_size")?,
            ..TrainConfig::default()
        };
        at("baseline", baseline.validate())?;

        let topology = match get(&map, "topology.mode").trim() {
            "centralized" => TopologyMode::Centralized,
            "decentralized" => TopologyMode::Decentralized(at(
                "topology.groups",
                GroupSpec::parse(get(&map, "topology.groups")),
            )?),
            "case6" => {
                let k: usize = parse(&map, "topology.k")?;
                if k == 0 {
                    return Err(Error::config("topology.k", "must be >= 1"));
                }
                TopologyMode::Case6 { k }
            }
            other => {
                return Err(Error::config(
                    "topology.mode",
                    format!("expected centralized, decentralized or case6, got `{other}`"),
                ))
            }
        };
        let table_rounds: Vec<u64> = list(&map, "report.table_rounds")?;
        if let Some(r) = table_rounds.iter().find(|&&r| r == 0 || r > rounds) {
            return Err(Error::config(
                "report.table_rounds",
                format!("round {r} is outside 1..={rounds}"),
            ));
        }

        Ok(Self {
            source,
            data_dir: PathBuf::from(get(&map, "data.dir")),
            split: parse(&map, "data.split")?,
            arch,
            plan,
            rounds,
            baseline,
            topology,
            table_rounds,
            cross_eval: parse(&map, "report.cross_eval")?,
            selection: parse(&map, "report.select")?,
            seed: parse(&map, "seed")?,
            output_dir: PathBuf::from(get(&map, "output.dir")),
            checkpoints: parse(&map, "output.checkpoints")?,
            echo: map,
        })
    }

    pub fn window(&self) -> usize {
        self.arch.window_len
    }

    /// The resolved key map as config text that loads back to `self`.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.echo {
            let _ = writeln!(out, "{k} = {}", toml::Value::String(v.clone()));
        }
        out
    }
}

/// Splits `key=value`.
pub fn parse_override(text: &str) -> Result<(String, String)> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| Error::config(text, "override must look like key=value"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_standard_operating_point() {
        let c = ExperimentConfig::defaults().unwrap();
        assert_eq!(c.arch.kind, ArchKind::Lstm);
        assert_eq!(c.plan.algorithm, Algorithm::Avg);
        assert_eq!(c.rounds, 15);
        assert_eq!(c.split, SplitSpec::new(8, 1, 1));
        assert_eq!(c.window(), 60);
        assert_eq!(c.plan.local_epochs, 5);
        assert_eq!(c.baseline.epochs, 65);
        assert_eq!(c.echo.len(), DEFAULTS.len());
    }

    #[test]
    fn file_then_overrides() {
        let text = "seed = 4\n[fl]\nrounds = 30\nmu = 0.5\n[model]\nhidden = [8, 4, 2]\n";
        let c = ExperimentConfig::from_toml_str(text, &[parse_override("fl.rounds=45").unwrap()])
            .unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.rounds, 45);
        assert_eq!(c.plan.mu, 0.5);
        assert_eq!(c.arch.hidden, vec![8, 4, 2]);
        assert_eq!(c.echo["model.hidden"], "8,4,2");
        let dotted = ExperimentConfig::from_toml_str("fl.rounds = 30\n", &[]).unwrap();
        assert_eq!(dotted.rounds, 30);
    }

    #[test]
    fn echo_round_trips() {
        let c = ExperimentConfig::from_toml_str(
            "data.split = \"4:1:5\"\nfl.algorithm = \"prox\"\n",
            &[],
        )
        .unwrap();
        assert_eq!(
            ExperimentConfig::from_toml_str(&c.to_toml(), &[]).unwrap(),
            c
        );
    }

    #[test]
    fn validation_errors_name_the_key() {
        let bad = |text: &str| ExperimentConfig::from_toml_str(text, &[]).unwrap_err();
        for (text, key) in [
            ("fl.rounds = -1", "fl.rounds"),
            ("fl.participation = 0", "fl"),
            ("fl.algorithm = \"fedfoo\"", "fl.algorithm"),
            ("data.split = \"4:0:5\"", "data.split"),
            ("data.window = 0", "data.window"),
            ("model.dropout = [0.1]", "model"),
            (
                "topology.mode = \"decentralized\"\ntopology.groups = \"V1;V1\"",
                "topology.groups",
            ),
            ("report.table_rounds = [20]", "report.table_rounds"),
            ("nonsense = 1", "nonsense"),
        ] {
            match bad(text) {
                Error::Config { key: k, .. } => assert_eq!(k, key, "{text}"),
                other => panic!("{text}: {other}"),
            }
        }
        assert!(parse_override("fl.rounds").is_err());
    }
}
