//! Round loops for centralized and decentralized runs.
//!
//! A run first trains every client's standalone baseline from the shared
//! initial weights, then runs the federation. A centralized run is a single
//! group holding every client, so a decentralized run with one all-client
//! group replays it bit for bit.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use super::fleet::Fleet;
use super::performers::{Group, GroupSpec};
use super::report::{
    ClientMetrics, ClientSummary, CrossEval, ExperimentReport, MaeSelection, RoundRecord, Topology,
    REPORT_SCHEMA_VERSION,
};
use crate::fl::{
    fedavg_round, fedsgd_round, make_partition, personalized_round, Algorithm, Client,
    RoundContext, RoundPlan,
};
use crate::nn::{evaluate, init_model, train_local, ArchSpec, Model, ParamVector, TrainConfig};
use crate::seed;
use crate::{Error, Result};

/// Everything that shapes a run apart from the fleet.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub arch: ArchSpec,
    pub plan: RoundPlan,
    pub rounds: u64,
    pub seed: u64,
    /// Standalone baseline schedule; its `seed` is replaced per client.
    pub baseline: TrainConfig,
    /// Rounds tabulated in the rounds table; empty means the last round.
    pub table_rounds: Vec<u64>,
    pub cross_eval: bool,
    pub selection: MaeSelection,
    /// Configuration echo copied into the report.
    pub config: BTreeMap<String, String>,
}

impl RunSpec {
    pub fn new(arch: ArchSpec, plan: RoundPlan) -> Self {
        Self {
            arch,
            plan,
            rounds: 15,
            seed: 0,
            baseline: TrainConfig::default(),
            table_rounds: Vec::new(),
            cross_eval: true,
            selection: MaeSelection::Final,
            config: BTreeMap::new(),
        }
    }

    fn validate(&self, fleet: &Fleet) -> Result<()> {
        self.arch.validate()?;
        self.baseline.validate()?;
        self.plan.validate(fleet.len())?;
        if self.arch.window_len != fleet.window {
            return Err(Error::param(
                "arch.window_len",
                format!(
                    "model expects windows of {} but the fleet uses {}",
                    self.arch.window_len, fleet.window
                ),
            ));
        }
        if let Some(r) = self
            .table_rounds
            .iter()
            .find(|&&r| r == 0 || r > self.rounds)
        {
            return Err(Error::param(
                "table_rounds",
                format!("round {r} is outside 1..={}", self.rounds),
            ));
        }
        if self.plan.algorithm.is_personalized() {
            make_partition(&self.arch, self.plan.algorithm, &self.plan.policy)?;
        }
        Ok(())
    }

    /// Initial weights shared by the baselines and the federation.
    pub fn initial_weights(&self) -> Result<ParamVector> {
        init_model(&self.arch, seed::derive(self.seed, "init", &[]))
    }

    /// Baseline schedule of the client at fleet position `index`.
    pub fn baseline_config(&self, index: usize) -> TrainConfig {
        TrainConfig {
            seed: seed::derive(self.seed, "baseline", &[index as u64]),
            ..self.baseline
        }
    }
}

/// Standalone models and their metrics, in fleet order.
#[derive(Debug, Clone)]
pub struct Baselines {
    pub models: Vec<ParamVector>,
    pub metrics: Vec<ClientMetrics>,
    pub seconds: f64,
}

pub struct RunOutcome {
    pub report: ExperimentReport,
    /// Final model per client in fleet order; `None` outside every group.
    /// Personalized algorithms give each client its composite model.
    pub final_models: Vec<Option<ParamVector>>,
    pub baseline_models: Vec<ParamVector>,
}

fn metrics(
    model: &Model,
    params: &ParamVector,
    fleet: &Fleet,
    index: usize,
) -> Result<ClientMetrics> {
    let c = &fleet.clients[index];
    Ok(ClientMetrics {
        id: c.id.clone(),
        val_mae: evaluate(model, params, &c.val)?,
        test_mae: evaluate(model, params, &c.test)?,
    })
}

/// Trains every client's standalone baseline from the initial weights.
pub fn train_baselines(fleet: &Fleet, spec: &RunSpec) -> Result<Baselines> {
    spec.validate(fleet)?;
    let model = Model::new(&spec.arch)?;
    let w0 = spec.initial_weights()?;
    let start = Instant::now();
    let models: Vec<ParamVector> = fleet
        .clients
        .par_iter()
        .map(|c| train_local(&model, &w0, &c.train, &spec.baseline_config(c.index)))
        .collect::<Result<_>>()?;
    let metrics = models
        .par_iter()
        .enumerate()
        .map(|(i, p)| metrics(&model, p, fleet, i))
        .collect::<Result<_>>()?;
    Ok(Baselines {
        models,
        metrics,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Entry `(i, j)`: test MAE of `models[i]` on client `j`'s test split.
pub fn cross_evaluate(model: &Model, models: &[ParamVector], fleet: &Fleet) -> Result<CrossEval> {
    if models.len() != fleet.len() {
        return Err(Error::Shape(format!(
            "{} models for {} clients",
            models.len(),
            fleet.len()
        )));
    }
    let matrix = models
        .par_iter()
        .map(|p| {
            fleet
                .clients
                .iter()
                .map(|c| evaluate(model, p, &c.test))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    CrossEval::new(
        fleet.ids().into_iter().map(str::to_string).collect(),
        matrix,
    )
}

struct GroupRun {
    /// Per round, metrics of the members in fleet order.
    history: Vec<Vec<(usize, ClientMetrics)>>,
    finals: Vec<(usize, ParamVector)>,
    seconds: Vec<f64>,
}

fn run_group(
    model: &Model,
    fleet: &Fleet,
    spec: &RunSpec,
    members: &[usize],
    w0: &ParamVector,
) -> Result<GroupRun> {
    let plan = &spec.plan;
    let algo = plan.algorithm;
    let split = if algo.is_personalized() {
        Some(make_partition(&spec.arch, algo, &plan.policy)?)
    } else {
        None
    };
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    let mut clients: Vec<Client> = sorted
        .iter()
        .map(|&i| {
            let c = &fleet.clients[i];
            Client::new(c.id.clone(), i, c.train.clone(), w0.clone(), spec.seed)
        })
        .collect();
    let mut global = w0.clone();
    let mut previous = w0.clone();
    let mut history = Vec::with_capacity(spec.rounds as usize);
    let mut seconds = Vec::with_capacity(spec.rounds as usize);
    for round in 1..=spec.rounds {
        let start = Instant::now();
        let ctx = RoundContext {
            model,
            plan,
            round,
            run_seed: spec.seed,
        };
        match (algo, &split) {
            (Algorithm::Sgd, _) => global = fedsgd_round(&ctx, &global, &mut clients)?,
            (Algorithm::Avg | Algorithm::Prox, _) => {
                let next = fedavg_round(&ctx, &global, &previous, &mut clients)?;
                previous = std::mem::replace(&mut global, next);
            }
            (Algorithm::Per | Algorithm::Rep, Some(split)) => {
                personalized_round(&ctx, split, &mut clients)?
            }
            (Algorithm::Per | Algorithm::Rep, None) => unreachable!("partition built above"),
        }
        let row = clients
            .par_iter()
            .map(|c| {
                let params = if split.is_some() { &c.params } else { &global };
                Ok((c.index, metrics(model, params, fleet, c.index)?))
            })
            .collect::<Result<Vec<_>>>()?;
        seconds.push(start.elapsed().as_secs_f64());
        history.push(row);
    }
    let finals = clients
        .into_iter()
        .map(|c| {
            let p = if split.is_some() {
                c.params
            } else {
                global.clone()
            };
            (c.index, p)
        })
        .collect();
    Ok(GroupRun {
        history,
        finals,
        seconds,
    })
}

fn resolve(fleet: &Fleet, groups: &GroupSpec) -> Result<Vec<Vec<usize>>> {
    groups.validate()?;
    groups
        .groups
        .iter()
        .map(|g| {
            g.members
                .iter()
                .map(|id| {
                    fleet.index_of(id).ok_or_else(|| {
                        Error::param(
                            "topology.groups",
                            format!("unknown vehicle {id:?} in {}", g.name),
                        )
                    })
                })
                .collect()
        })
        .collect()
}

fn execute(
    fleet: &Fleet,
    spec: &RunSpec,
    topology: Topology,
    groups: &[Group],
    member_sets: &[Vec<usize>],
    baselines: &Baselines,
) -> Result<RunOutcome> {
    spec.validate(fleet)?;
    if baselines.models.len() != fleet.len() {
        return Err(Error::Shape(format!(
            "{} baselines for {} clients",
            baselines.models.len(),
            fleet.len()
        )));
    }
    let model = Model::new(&spec.arch)?;
    let w0 = spec.initial_weights()?;
    let runs = member_sets
        .iter()
        .map(|m| run_group(&model, fleet, spec, m, &w0))
        .collect::<Result<Vec<_>>>()?;

    let mut history = Vec::with_capacity(spec.rounds as usize);
    let mut round_seconds = vec![0.0; spec.rounds as usize];
    for r in 0..spec.rounds as usize {
        let mut row: Vec<&(usize, ClientMetrics)> =
            runs.iter().flat_map(|g| &g.history[r]).collect();
        row.sort_by_key(|(i, _)| *i);
        history.push(RoundRecord {
            round: r as u64 + 1,
            clients: row.into_iter().map(|(_, m)| m.clone()).collect(),
        });
        round_seconds[r] = runs.iter().map(|g| g.seconds[r]).sum();
    }
    let mut final_models: Vec<Option<ParamVector>> = vec![None; fleet.len()];
    for (i, p) in runs.into_iter().flat_map(|g| g.finals) {
        final_models[i] = Some(p);
    }

    let (cross_eval_baseline, cross_eval_final) = if spec.cross_eval {
        let base = cross_evaluate(&model, &baselines.models, fleet)?;
        let fin = match final_models.iter().cloned().collect::<Option<Vec<_>>>() {
            Some(all) if spec.rounds > 0 => Some(cross_evaluate(&model, &all, fleet)?),
            _ => None,
        };
        (Some(base), fin)
    } else {
        (None, None)
    };

    let clients = fleet
        .clients
        .iter()
        .zip(&baselines.metrics)
        .map(|(c, b)| ClientSummary {
            id: c.id.clone(),
            n_windows: c.n_windows,
            n_train: c.train.len(),
            n_val: c.val.len(),
            n_test: c.test.len(),
            lag_s: c.lag_s,
            baseline_val_mae: b.val_mae,
            baseline_test_mae: b.test_mae,
        })
        .collect();
    let table_rounds = if !spec.table_rounds.is_empty() {
        spec.table_rounds.clone()
    } else if spec.rounds > 0 {
        vec![spec.rounds]
    } else {
        Vec::new()
    };
    let report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        topology,
        arch: spec.arch.kind,
        algorithm: spec.plan.algorithm,
        rounds: spec.rounds,
        window: fleet.window,
        split: fleet.split.to_string(),
        seed: spec.seed,
        config: spec.config.clone(),
        clients,
        groups: groups.to_vec(),
        history,
        table_rounds,
        selection: spec.selection,
        cross_eval_baseline,
        cross_eval_final,
        baseline_seconds: baselines.seconds,
        round_seconds,
    };
    Ok(RunOutcome {
        report,
        final_models,
        baseline_models: baselines.models.clone(),
    })
}

/// One server federating every client, with freshly trained baselines.
pub fn run_centralized(fleet: &Fleet, spec: &RunSpec) -> Result<RunOutcome> {
    let baselines = train_baselines(fleet, spec)?;
    run_centralized_with(fleet, spec, &baselines)
}

pub fn run_centralized_with(
    fleet: &Fleet,
    spec: &RunSpec,
    baselines: &Baselines,
) -> Result<RunOutcome> {
    let all: Vec<usize> = (0..fleet.len()).collect();
    execute(fleet, spec, Topology::Centralized, &[], &[all], baselines)
}

/// Independent peer groups, each averaging among its own members only.
pub fn run_decentralized(fleet: &Fleet, groups: &GroupSpec, spec: &RunSpec) -> Result<RunOutcome> {
    resolve(fleet, groups)?;
    let baselines = train_baselines(fleet, spec)?;
    run_decentralized_with(fleet, groups, spec, &baselines)
}

pub fn run_decentralized_with(
    fleet: &Fleet,
    groups: &GroupSpec,
    spec: &RunSpec,
    baselines: &Baselines,
) -> Result<RunOutcome> {
    let sets = resolve(fleet, groups)?;
    execute(
        fleet,
        spec,
        Topology::Decentralized,
        &groups.groups,
        &sets,
        baselines,
    )
}
