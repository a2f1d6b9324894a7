use rand::seq::index::sample;
use rayon::prelude::*;

use super::aggregate::{weighted_average, weighted_average_into};
use super::client::Client;
use super::partition::SharedPersonalSplit;
use super::plan::{Algorithm, AnchorMode, LocalMode, RoundPlan};
use crate::nn::{run_local_epochs, Dropout, Model, ParamVector, Proximal, TrainConfig};
use crate::seed;
use crate::{Error, Result};

/// Inputs common to every client in one round.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub model: &'a Model,
    pub plan: &'a RoundPlan,
    /// 1-based round index.
    pub round: u64,
    pub run_seed: u64,
}

impl RoundContext<'_> {
    fn train_config(&self, client: &Client) -> TrainConfig {
        TrainConfig {
            batch_size: self.plan.batch_size,
            epochs: self.plan.local_epochs,
            seed: client.seed,
            shuffle: true,
        }
    }
}

/// Fleet indices of the clients taking part in `round`, ascending.
///
/// The draw is seeded by the run seed, the round and the member set, so a
/// group holding every client draws exactly what a centralized run draws.
pub fn sample_participants(
    plan: &RoundPlan,
    run_seed: u64,
    round: u64,
    members: &[usize],
) -> Vec<usize> {
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    let k = plan.participants(sorted.len());
    if k >= sorted.len() {
        return sorted;
    }
    let mut key = vec![round];
    key.extend(sorted.iter().map(|&i| i as u64));
    let mut rng = seed::rng(seed::derive(run_seed, "participation", &key));
    let mut picked: Vec<usize> = sample(&mut rng, sorted.len(), k)
        .into_iter()
        .map(|j| sorted[j])
        .collect();
    picked.sort_unstable();
    picked
}

/// `w - eta * sum(n_v / n * g_v)`.
pub fn server_sgd_step(
    w: &ParamVector,
    grads: &[(&ParamVector, usize)],
    eta: f64,
) -> Result<ParamVector> {
    let g = weighted_average(grads)?;
    if !g.same_partition(w) {
        return Err(Error::PartitionMismatch(
            "gradient layout differs from the model".into(),
        ));
    }
    let mut out = w.clone();
    for (x, d) in out.values_mut().iter_mut().zip(g.values()) {
        *x -= eta * d;
    }
    Ok(out)
}

fn sorted_by_index(clients: &mut [Client]) {
    clients.sort_by_key(|c| c.index);
}

/// FedSGD: every client sends its full-batch gradient at `w`; the server
/// takes one weighted gradient step.
pub fn fedsgd_round(
    ctx: &RoundContext<'_>,
    w: &ParamVector,
    clients: &mut [Client],
) -> Result<ParamVector> {
    if clients.is_empty() {
        return Err(Error::param("clients", "FedSGD needs at least one client"));
    }
    sorted_by_index(clients);
    let grads: Vec<ParamVector> = clients
        .par_iter()
        .map(|c| {
            let idx: Vec<usize> = (0..c.n()).collect();
            let dropout = Dropout::Seeded(seed::derive(c.seed, "sgd", &[ctx.round]));
            Ok(ctx.model.loss_and_grad(w, &c.train, &idx, dropout)?.1)
        })
        .collect::<Result<_>>()?;
    let entries: Vec<(&ParamVector, usize)> = grads
        .iter()
        .zip(clients.iter())
        .map(|(g, c)| (g, c.n()))
        .collect();
    let next = server_sgd_step(w, &entries, ctx.plan.server_lr)?;
    for c in clients.iter_mut() {
        c.params = next.clone();
    }
    Ok(next)
}

/// FedAvg and FedProx: sampled clients train locally from the global
/// weights and the server averages their results.
///
/// `previous` is the global model of the previous round (the initial model
/// in round 1) and anchors the FedProx penalty in the default mode.
pub fn fedavg_round(
    ctx: &RoundContext<'_>,
    global: &ParamVector,
    previous: &ParamVector,
    clients: &mut [Client],
) -> Result<ParamVector> {
    let algo = ctx.plan.algorithm;
    if !matches!(algo, Algorithm::Avg | Algorithm::Prox) {
        return Err(Error::param(
            "algorithm",
            format!("{algo} is not a weight-averaging procedure"),
        ));
    }
    sorted_by_index(clients);
    let members: Vec<usize> = clients.iter().map(|c| c.index).collect();
    let chosen = sample_participants(ctx.plan, ctx.run_seed, ctx.round, &members);
    let anchor = match ctx.plan.anchor {
        AnchorMode::PreviousGlobal => previous,
        AnchorMode::Received => global,
    };
    let mu = ctx.plan.mu;
    clients
        .par_iter_mut()
        .filter(|c| chosen.binary_search(&c.index).is_ok())
        .try_for_each(|c| {
            let cfg = ctx.train_config(c);
            c.params = global.clone();
            let prox = (algo == Algorithm::Prox).then_some(Proximal { anchor, mu });
            run_local_epochs(
                ctx.model,
                &mut c.params,
                &mut c.adam,
                &c.train,
                &cfg,
                c.epochs_done,
                prox,
            )?;
            c.epochs_done += cfg.epochs as u64;
            Ok::<_, Error>(())
        })?;
    let entries: Vec<(&ParamVector, usize)> = clients
        .iter()
        .filter(|c| chosen.binary_search(&c.index).is_ok())
        .map(|c| (&c.params, c.n()))
        .collect();
    weighted_average(&entries)
}

/// FedPer and FedRep: every client updates its whole composite model, then
/// the server overwrites each client's shared segments with their weighted
/// average. Personal segments never leave the client.
pub fn personalized_round(
    ctx: &RoundContext<'_>,
    split: &SharedPersonalSplit,
    clients: &mut [Client],
) -> Result<()> {
    if clients.is_empty() {
        return Err(Error::param("clients", "need at least one client"));
    }
    if clients
        .iter()
        .any(|c| !c.params.same_partition(&clients[0].params))
    {
        return Err(Error::PartitionMismatch(
            "clients disagree on the parameter layout".into(),
        ));
    }
    sorted_by_index(clients);
    clients.par_iter_mut().try_for_each(|c| {
        match ctx.plan.local_mode {
            LocalMode::Epochs => {
                let cfg = ctx.train_config(c);
                run_local_epochs(
                    ctx.model,
                    &mut c.params,
                    &mut c.adam,
                    &c.train,
                    &cfg,
                    c.epochs_done,
                    None,
                )?;
                c.epochs_done += cfg.epochs as u64;
            }
            LocalMode::SingleStep => {
                let idx: Vec<usize> = (0..c.n()).collect();
                let dropout = Dropout::Seeded(seed::derive(c.seed, "step", &[ctx.round]));
                let (_, g) = ctx
                    .model
                    .loss_and_grad(&c.params, &c.train, &idx, dropout)?;
                for (w, d) in c.params.values_mut().iter_mut().zip(g.values()) {
                    *w -= ctx.plan.server_lr * d;
                }
            }
        }
        Ok::<_, Error>(())
    })?;
    let mut shared = clients[0].params.clone();
    {
        let entries: Vec<(&ParamVector, usize)> =
            clients.iter().map(|c| (&c.params, c.n())).collect();
        weighted_average_into(&mut shared, &entries, split.shared_ranges())?;
    }
    for c in clients.iter_mut() {
        for r in split.shared_ranges() {
            c.params.values_mut()[r.clone()].copy_from_slice(&shared.values()[r.clone()]);
        }
    }
    Ok(())
}
