use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::loss::mae_loss;
use super::net::{Dropout, Model};
use super::params::ParamVector;
use crate::data::WindowedDataset;
use crate::seed;
use crate::{Error, Result};

/// Mini-batch schedule for local training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 70,
            epochs: 65,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

/// Proximal penalty `(mu / 2) ||w - anchor||^2` added to every batch loss.
#[derive(Debug, Clone, Copy)]
pub struct Proximal<'a> {
    pub anchor: &'a ParamVector,
    pub mu: f64,
}

/// Runs `cfg.epochs` epochs of shuffled mini-batch Adam on `params`.
///
/// Epochs are numbered from `epoch_start` so that a client resuming across
/// rounds continues the same shuffle and dropout streams: with a persistent
/// `adam`, two calls of `E` epochs equal one call of `2E` epochs bitwise.
pub fn run_local_epochs(
    model: &Model,
    params: &mut ParamVector,
    adam: &mut AdamState,
    ds: &WindowedDataset,
    cfg: &TrainConfig,
    epoch_start: u64,
    prox: Option<Proximal<'_>>,
) -> Result<()> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Ok(());
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset {
            len: 0,
            window: ds.window_len(),
        });
    }
    if let Some(px) = &prox {
        if !px.anchor.same_partition(params) {
            return Err(Error::PartitionMismatch(
                "proximal anchor differs from model".into(),
            ));
        }
        if !(px.mu >= 0.0) {
            return Err(Error::param("mu", "must be >= 0"));
        }
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    for e in 0..cfg.epochs as u64 {
        let epoch = epoch_start + e;
        if cfg.shuffle {
            order.sort_unstable();
            order.shuffle(&mut seed::rng(seed::derive(cfg.seed, "shuffle", &[epoch])));
        }
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let dropout = Dropout::Seeded(seed::derive(cfg.seed, "dropout", &[epoch, b as u64]));
            let (_, mut grad) = model.loss_and_grad(params, ds, batch, dropout)?;
            if let Some(px) = &prox {
                // mu == 0 is skipped so the update matches plain training bitwise.
                if px.mu != 0.0 {
                    for ((g, w), a) in grad
                        .values_mut()
                        .iter_mut()
                        .zip(params.values())
                        .zip(px.anchor.values())
                    {
                        *g += px.mu * (w - a);
                    }
                }
            }
            adam.step(params, grad.values())?;
        }
    }
    Ok(())
}

/// Standalone local training from `params` with a fresh optimizer.
pub fn train_local(
    model: &Model,
    params: &ParamVector,
    ds: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<ParamVector> {
    let mut out = params.clone();
    let mut adam = AdamState::new(params.len());
    run_local_epochs(model, &mut out, &mut adam, ds, cfg, 0, None)?;
    Ok(out)
}

/// Eval-mode predictions for every window.
pub fn predict(model: &Model, params: &ParamVector, ds: &WindowedDataset) -> Result<Vec<f64>> {
    model.predict_all(params, ds)
}

/// Eval-mode MAE over all windows (Wh).
pub fn evaluate(model: &Model, params: &ParamVector, ds: &WindowedDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyBatch);
    }
    mae_loss(&model.predict_all(params, ds)?, ds.labels())
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::data::{make_windows, FeatureVector};
    use crate::nn::{init_model, ArchKind, ArchSpec};

    fn linear_set(n: usize, m: usize) -> WindowedDataset {
        let mut rng = seed::rng(11);
        let f: Vec<FeatureVector> = (0..n + m - 1)
            .map(|_| std::array::from_fn(|_| rng.gen_range(-0.5..0.5)))
            .collect();
        let e: Vec<f64> = f.iter().map(|x| 2.0 * x.iter().sum::<f64>()).collect();
        make_windows(&f, &e, m, 1).unwrap()
    }

    fn tiny(kind: ArchKind) -> (Model, ParamVector) {
        let arch = ArchSpec::new(kind, 5)
            .with_hidden(vec![3, 3, 3])
            .without_dropout();
        (Model::new(&arch).unwrap(), init_model(&arch, 3).unwrap())
    }

    #[test]
    fn zero_epochs_is_identity() {
        let (model, p) = tiny(ArchKind::Lstm);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert_eq!(
            train_local(&model, &p, &linear_set(20, 5), &cfg).unwrap(),
            p
        );
    }

    #[test]
    fn descends_on_easy_problem() {
        let ds = linear_set(40, 5);
        for kind in [ArchKind::Ann, ArchKind::Gru, ArchKind::Lstm] {
            let (model, p) = tiny(kind);
            let cfg = TrainConfig {
                batch_size: 8,
                epochs: 50,
                seed: 1,
                shuffle: true,
            };
            let before = evaluate(&model, &p, &ds).unwrap();
            let trained = train_local(&model, &p, &ds, &cfg).unwrap();
            let after = evaluate(&model, &trained, &ds).unwrap();
            assert!(after < before, "{kind}: {after} !< {before}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let ds = linear_set(30, 5);
        let arch = ArchSpec::new(ArchKind::Gru, 5)
            .with_hidden(vec![3, 3, 3])
            .with_dropout(vec![0.3, 0.3]);
        let model = Model::new(&arch).unwrap();
        let p = init_model(&arch, 0).unwrap();
        let cfg = TrainConfig {
            batch_size: 7,
            epochs: 3,
            seed: 5,
            shuffle: true,
        };
        let a = train_local(&model, &p, &ds, &cfg).unwrap();
        let b = train_local(&model, &p, &ds, &cfg).unwrap();
        assert_eq!(a, b);
        let c = train_local(&model, &p, &ds, &TrainConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_epochs_resume_bitwise() {
        let ds = linear_set(25, 5);
        let (model, p) = tiny(ArchKind::Lstm);
        let cfg = TrainConfig {
            batch_size: 6,
            epochs: 4,
            seed: 2,
            shuffle: true,
        };
        let whole = train_local(&model, &p, &ds, &cfg).unwrap();
        let half = TrainConfig { epochs: 2, ..cfg };
        let mut q = p.clone();
        let mut adam = AdamState::new(q.len());
        run_local_epochs(&model, &mut q, &mut adam, &ds, &half, 0, None).unwrap();
        run_local_epochs(&model, &mut q, &mut adam, &ds, &half, 2, None).unwrap();
        assert_eq!(whole, q);
    }

    #[test]
    fn zero_mu_matches_plain_training() {
        let ds = linear_set(25, 5);
        let (model, p) = tiny(ArchKind::Gru);
        let cfg = TrainConfig {
            batch_size: 6,
            epochs: 2,
            seed: 2,
            shuffle: true,
        };
        let plain = train_local(&model, &p, &ds, &cfg).unwrap();
        let mut q = p.clone();
        let mut adam = AdamState::new(q.len());
        let anchor = init_model(model.arch(), 99).unwrap();
        let prox = Proximal {
            anchor: &anchor,
            mu: 0.0,
        };
        run_local_epochs(&model, &mut q, &mut adam, &ds, &cfg, 0, Some(prox)).unwrap();
        assert_eq!(plain, q);
    }

    #[test]
    fn zero_model_mae_is_mean_abs_label() {
        let ds = linear_set(10, 5);
        let (model, p) = tiny(ArchKind::Ann);
        let zero = ParamVector::zeros(p.partition().clone());
        let expect = ds.labels().iter().map(|y| y.abs()).sum::<f64>() / ds.len() as f64;
        assert!((evaluate(&model, &zero, &ds).unwrap() - expect).abs() < 1e-12);
    }
}
