//! Round procedures against closed-form and executable oracles.

use std::sync::Arc;

use evfl_core::data::{make_windows, FeatureVector, WindowedDataset};
use evfl_core::fl::{
    fedavg_round, fedsgd_round, make_partition, personalized_round, sample_participants,
    server_sgd_step, Algorithm, AnchorMode, Client, PartitionPolicy, RoundContext, RoundPlan,
};
use evfl_core::nn::{
    init_model, run_local_epochs, train_local, AdamState, ArchKind, ArchSpec, LayerPartition,
    Model, ParamVector, Proximal, TrainConfig,
};
use evfl_core::seed;
use rand::Rng;

const RUN_SEED: u64 = 77;

fn dataset(n: usize, seed_value: u64) -> WindowedDataset {
    let m = 5;
    let mut rng = seed::rng(seed_value);
    let f: Vec<FeatureVector> = (0..n + m - 1)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
        .collect();
    let e: Vec<f64> = f.iter().map(|x| 0.5 * x[0] + 0.2 * x[1] + 0.3).collect();
    make_windows(&f, &e, m, 1).unwrap()
}

fn arch(kind: ArchKind) -> ArchSpec {
    ArchSpec::new(kind, 5)
        .with_hidden(vec![4, 3, 3])
        .with_dropout(vec![0.1, 0.2])
}

fn fleet(model: &Model, sizes: &[usize]) -> (ParamVector, Vec<Client>) {
    let w0 = init_model(model.arch(), 5).unwrap();
    let clients = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            Client::new(
                format!("V{}", i + 1),
                i,
                dataset(n, 100 + i as u64),
                w0.clone(),
                RUN_SEED,
            )
        })
        .collect();
    (w0, clients)
}

fn plan(algorithm: Algorithm) -> RoundPlan {
    RoundPlan {
        algorithm,
        local_epochs: 2,
        batch_size: 8,
        ..RoundPlan::default()
    }
}

fn ctx<'a>(model: &'a Model, plan: &'a RoundPlan, round: u64) -> RoundContext<'a> {
    RoundContext {
        model,
        plan,
        round,
        run_seed: RUN_SEED,
    }
}

fn pv(values: Vec<f64>) -> ParamVector {
    let part = Arc::new(LayerPartition::from_shapes(vec![(
        "w".into(),
        vec![values.len()],
    )]));
    ParamVector::from_values(part, values).unwrap()
}

/// Gradient of the mean squared error of a linear model `x . w`.
fn squared_error_gradient(xs: &[Vec<f64>], ys: &[f64], w: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; w.len()];
    for (x, y) in xs.iter().zip(ys) {
        let r: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - y;
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi += 2.0 * r * xi / xs.len() as f64;
        }
    }
    g
}

#[test]
fn federated_step_equals_pooled_step_for_linear_surrogate() {
    let mut rng = seed::rng(1);
    let xs: Vec<Vec<f64>> = (0..30)
        .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let ys: Vec<f64> = (0..30).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let w = vec![0.3, -0.1, 0.7, 0.05];
    let eta = 0.1;
    let pooled = squared_error_gradient(&xs, &ys, &w);
    let central: Vec<f64> = w.iter().zip(&pooled).map(|(a, g)| a - eta * g).collect();

    // Unequal halves exercise the n_v / n weights.
    let (xa, xb) = xs.split_at(12);
    let (ya, yb) = ys.split_at(12);
    let ga = pv(squared_error_gradient(xa, ya, &w));
    let gb = pv(squared_error_gradient(xb, yb, &w));
    let fed = server_sgd_step(&pv(w.clone()), &[(&ga, 12), (&gb, 18)], eta).unwrap();
    for (a, b) in fed.values().iter().zip(&central) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn server_step_is_linear_in_eta() {
    let g1 = pv(vec![0.37, -1.91, 2.5e-3]);
    let g2 = pv(vec![-0.11, 0.42, 7.7]);
    let w = pv(vec![0.0; 3]);
    let s1 = server_sgd_step(&w, &[(&g1, 3), (&g2, 5)], 0.125).unwrap();
    let s2 = server_sgd_step(&w, &[(&g1, 3), (&g2, 5)], 0.5).unwrap();
    for (a, b) in s1.values().iter().zip(s2.values()) {
        assert_eq!(4.0 * a, *b);
    }
    let zero = pv(vec![0.0; 3]);
    let w = pv(vec![1.0, 2.0, 3.0]);
    assert_eq!(
        server_sgd_step(&w, &[(&zero, 1), (&zero, 9)], 0.3).unwrap(),
        w
    );
}

#[test]
fn fedsgd_single_client_is_a_full_batch_step() {
    let model = Model::new(&arch(ArchKind::Gru)).unwrap();
    let (w0, mut clients) = fleet(&model, &[20]);
    let p = plan(Algorithm::Sgd);
    let next = fedsgd_round(&ctx(&model, &p, 1), &w0, &mut clients).unwrap();
    let c = &clients[0];
    let idx: Vec<usize> = (0..c.n()).collect();
    let dropout = evfl_core::nn::Dropout::Seeded(seed::derive(c.seed, "sgd", &[1]));
    let (_, g) = model.loss_and_grad(&w0, &c.train, &idx, dropout).unwrap();
    let expect: Vec<f64> = w0
        .values()
        .iter()
        .zip(g.values())
        .map(|(w, d)| w - p.server_lr * d)
        .collect();
    assert_eq!(next.values(), expect.as_slice());
}

#[test]
fn fedavg_zero_epochs_keeps_global() {
    let model = Model::new(&arch(ArchKind::Lstm)).unwrap();
    let (w0, mut clients) = fleet(&model, &[10, 15, 12]);
    let p = RoundPlan {
        local_epochs: 0,
        ..plan(Algorithm::Avg)
    };
    assert_eq!(
        fedavg_round(&ctx(&model, &p, 1), &w0, &w0, &mut clients).unwrap(),
        w0
    );
}

#[test]
fn single_client_fedavg_equals_sequential_training() {
    let model = Model::new(&arch(ArchKind::Lstm)).unwrap();
    let (w0, mut clients) = fleet(&model, &[23]);
    let p = plan(Algorithm::Avg);
    let mut global = w0.clone();
    let rounds = 3;
    for t in 1..=rounds {
        global = fedavg_round(&ctx(&model, &p, t), &global, &global.clone(), &mut clients).unwrap();
    }
    let cfg = TrainConfig {
        batch_size: p.batch_size,
        epochs: p.local_epochs * rounds as usize,
        seed: clients[0].seed,
        shuffle: true,
    };
    let sequential = train_local(&model, &w0, &clients[0].train, &cfg).unwrap();
    assert_eq!(global, sequential);
}

fn run_avg_like(algorithm: Algorithm, participation: f64, kind: ArchKind) -> Vec<ParamVector> {
    let model = Model::new(&arch(kind)).unwrap();
    let (w0, mut clients) = fleet(&model, &[14, 9, 17, 11]);
    let p = RoundPlan {
        participation,
        mu: 0.0,
        ..plan(algorithm)
    };
    let mut prev = w0.clone();
    let mut global = w0;
    let mut out = Vec::new();
    for t in 1..=3 {
        let next = fedavg_round(&ctx(&model, &p, t), &global, &prev, &mut clients).unwrap();
        prev = std::mem::replace(&mut global, next);
        out.push(global.clone());
    }
    out
}

#[test]
fn fedprox_without_penalty_is_fedavg() {
    for kind in [ArchKind::Ann, ArchKind::Gru, ArchKind::Lstm] {
        for phi in [1.0, 0.5] {
            assert_eq!(
                run_avg_like(Algorithm::Avg, phi, kind),
                run_avg_like(Algorithm::Prox, phi, kind)
            );
        }
    }
}

#[test]
fn strong_penalty_stays_near_anchor() {
    let model = Model::new(&arch(ArchKind::Gru)).unwrap();
    let (w0, clients) = fleet(&model, &[30]);
    let c = &clients[0];
    let cfg = TrainConfig {
        batch_size: 6,
        epochs: 3,
        seed: c.seed,
        shuffle: true,
    };
    let drift = |mu: f64| {
        let mut w = w0.clone();
        let mut adam = AdamState::new(w.len());
        let prox = Proximal { anchor: &w0, mu };
        run_local_epochs(&model, &mut w, &mut adam, &c.train, &cfg, 0, Some(prox)).unwrap();
        w.l2_distance(&w0)
    };
    assert!(drift(1e6) < drift(0.0));
}

#[test]
fn anchor_modes_differ_only_after_first_round() {
    let model = Model::new(&arch(ArchKind::Gru)).unwrap();
    let run = |anchor: AnchorMode| {
        let (w0, mut clients) = fleet(&model, &[12, 16]);
        let p = RoundPlan {
            mu: 0.5,
            anchor,
            ..plan(Algorithm::Prox)
        };
        let w1 = fedavg_round(&ctx(&model, &p, 1), &w0, &w0, &mut clients).unwrap();
        let w2 = fedavg_round(&ctx(&model, &p, 2), &w1, &w0, &mut clients).unwrap();
        (w1, w2)
    };
    let (a1, a2) = run(AnchorMode::PreviousGlobal);
    let (b1, b2) = run(AnchorMode::Received);
    assert_eq!(a1, b1);
    assert_ne!(a2, b2);
}

#[test]
fn participation_sampling() {
    let p = RoundPlan {
        participation: 0.5,
        ..plan(Algorithm::Avg)
    };
    let members: Vec<usize> = (0..10).collect();
    let a = sample_participants(&p, 1, 3, &members);
    assert_eq!(a.len(), 5);
    assert!(a.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(a, sample_participants(&p, 1, 3, &members));
    let mut shuffled = members.clone();
    shuffled.reverse();
    assert_eq!(a, sample_participants(&p, 1, 3, &shuffled));
    let rounds: Vec<Vec<usize>> = (1..6)
        .map(|t| sample_participants(&p, 1, t, &members))
        .collect();
    assert!(rounds.iter().any(|r| *r != rounds[0]));
    let full = plan(Algorithm::Per);
    assert_eq!(sample_participants(&full, 1, 1, &members), members);
}

#[test]
fn client_order_does_not_change_rounds() {
    let model = Model::new(&arch(ArchKind::Lstm)).unwrap();
    let (w0, clients) = fleet(&model, &[14, 9, 17]);
    let p = plan(Algorithm::Avg);
    let mut a = clients.clone();
    let mut b: Vec<Client> = clients.into_iter().rev().collect();
    let wa = fedavg_round(&ctx(&model, &p, 1), &w0, &w0, &mut a).unwrap();
    let wb = fedavg_round(&ctx(&model, &p, 1), &w0, &w0, &mut b).unwrap();
    assert_eq!(wa, wb);

    let split = make_partition(model.arch(), Algorithm::Per, &PartitionPolicy::Default).unwrap();
    let pp = plan(Algorithm::Per);
    let mut c = a.clone();
    let mut d: Vec<Client> = a.into_iter().rev().collect();
    personalized_round(&ctx(&model, &pp, 1), &split, &mut c).unwrap();
    personalized_round(&ctx(&model, &pp, 1), &split, &mut d).unwrap();
    d.sort_by_key(|x| x.index);
    for (x, y) in c.iter().zip(&d) {
        assert_eq!(x.params, y.params);
    }
}

fn personalized_fleet(model: &Model) -> Vec<Client> {
    let (_, mut clients) = fleet(model, &[14, 9, 17]);
    // Distinct starting composites so the server step has something to do.
    for c in clients.iter_mut() {
        c.params = init_model(model.arch(), 40 + c.index as u64).unwrap();
    }
    clients
}

#[test]
fn server_step_touches_only_shared_segments() {
    for algo in [Algorithm::Per, Algorithm::Rep] {
        let model = Model::new(&arch(ArchKind::Lstm)).unwrap();
        let split = make_partition(model.arch(), algo, &PartitionPolicy::Default).unwrap();
        let mut clients = personalized_fleet(&model);
        let p = plan(algo);

        // Replay the local phase by hand, then compare against the round.
        let mut local = clients.clone();
        for c in local.iter_mut() {
            let cfg = TrainConfig {
                batch_size: p.batch_size,
                epochs: p.local_epochs,
                seed: c.seed,
                shuffle: true,
            };
            run_local_epochs(&model, &mut c.params, &mut c.adam, &c.train, &cfg, 0, None).unwrap();
        }
        personalized_round(&ctx(&model, &p, 1), &split, &mut clients).unwrap();

        let total: f64 = local.iter().map(|c| c.n() as f64).sum();
        for (after, before) in clients.iter().zip(&local) {
            for r in split.personal_ranges() {
                assert_eq!(
                    after.params.values()[r.clone()],
                    before.params.values()[r.clone()]
                );
            }
            for r in split.shared_ranges() {
                for k in r.clone() {
                    let expect: f64 = local
                        .iter()
                        .map(|c| c.n() as f64 / total * c.params.values()[k])
                        .sum();
                    assert!((after.params.values()[k] - expect).abs() < 1e-12);
                }
            }
        }
        // All clients agree on the shared segments after the step.
        for c in &clients[1..] {
            for r in split.shared_ranges() {
                assert_eq!(
                    c.params.values()[r.clone()],
                    clients[0].params.values()[r.clone()]
                );
            }
        }
    }
}

#[test]
fn personal_multiset_is_preserved_without_local_work() {
    let model = Model::new(&arch(ArchKind::Gru)).unwrap();
    let split = make_partition(model.arch(), Algorithm::Rep, &PartitionPolicy::Default).unwrap();
    let mut clients = personalized_fleet(&model);
    let before = clients.clone();
    let p = RoundPlan {
        local_epochs: 0,
        ..plan(Algorithm::Rep)
    };
    personalized_round(&ctx(&model, &p, 1), &split, &mut clients).unwrap();
    for (a, b) in clients.iter().zip(&before) {
        for r in split.personal_ranges() {
            assert_eq!(a.params.values()[r.clone()], b.params.values()[r.clone()]);
        }
    }
}

#[test]
fn empty_personal_set_is_fedavg() {
    for algo in [Algorithm::Per, Algorithm::Rep] {
        let model = Model::new(&arch(ArchKind::Lstm)).unwrap();
        let (w0, clients) = fleet(&model, &[14, 9, 17]);
        let split = make_partition(model.arch(), algo, &PartitionPolicy::EmptyPersonal).unwrap();
        let mut per = clients.clone();
        let mut avg = clients;
        let pp = RoundPlan {
            policy: PartitionPolicy::EmptyPersonal,
            ..plan(algo)
        };
        let pa = plan(Algorithm::Avg);
        let mut global = w0.clone();
        for t in 1..=3 {
            personalized_round(&ctx(&model, &pp, t), &split, &mut per).unwrap();
            global =
                fedavg_round(&ctx(&model, &pa, t), &global, &global.clone(), &mut avg).unwrap();
            for c in &per {
                assert_eq!(c.params, global, "{algo} round {t}");
            }
        }
    }
}
