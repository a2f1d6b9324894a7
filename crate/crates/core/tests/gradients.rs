//! Analytic backpropagation against central finite differences.

use evfl_core::data::{make_windows, FeatureVector, WindowedDataset};
use evfl_core::nn::{
    finite_diff_gradient, init_model, relative_error, ArchKind, ArchSpec, Dropout, Model,
    ParamVector,
};
use evfl_core::seed;
use rand::seq::index::sample;
use rand::Rng;

fn inputs(m: usize, n: usize, seed_value: u64) -> WindowedDataset {
    let mut rng = seed::rng(seed_value);
    let f: Vec<FeatureVector> = (0..n + m - 1)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
        .collect();
    let e = vec![0.0; f.len()];
    make_windows(&f, &e, m, 1).unwrap()
}

/// Labels one unit away from the model's own predictions: every residual is
/// far from the kink of |r| relative to the probe step, and the loss stays
/// near 1 so rounding noise in the differences is small. Unbalanced signs
/// keep the head bias gradient away from zero.
fn relabel(model: &Model, params: &ParamVector, ds: &WindowedDataset) -> WindowedDataset {
    let preds = model.predict_all(params, ds).unwrap();
    let labels = preds
        .iter()
        .enumerate()
        .map(|(k, p)| if k % 3 == 1 { p - 1.0 } else { p + 1.0 })
        .collect();
    WindowedDataset::from_parts(
        ds.window_len(),
        ds.series().to_vec(),
        (0..ds.len()).collect(),
        labels,
    )
    .unwrap()
}

fn check(kind: ArchKind, dropout: Dropout, arch_dropout: Vec<f64>) -> f64 {
    let arch = ArchSpec::new(kind, 5)
        .with_hidden(vec![3, 3, 3])
        .with_dropout(arch_dropout);
    let model = Model::new(&arch).unwrap();
    let params = init_model(&arch, 17).unwrap();
    let ds = relabel(&model, &params, &inputs(5, 4, 23));
    let idx = [0, 1, 2, 3];
    let (_, grad) = model.loss_and_grad(&params, &ds, &idx, dropout).unwrap();
    let mut rng = seed::rng(31);
    let mut coords: Vec<usize> = sample(&mut rng, params.len(), 30).into_vec();
    // Always include the head and the first-layer weights.
    coords.extend([0, params.len() - 1]);
    let numeric = finite_diff_gradient(
        |p| Ok(model.loss_and_grad(p, &ds, &idx, dropout)?.0),
        &params,
        &coords,
        1e-5,
    )
    .unwrap();
    coords
        .iter()
        .zip(&numeric)
        .map(|(&k, &n)| relative_error(grad.values()[k], n))
        .fold(0.0, f64::max)
}

#[test]
fn backprop_matches_finite_differences() {
    for kind in [ArchKind::Ann, ArchKind::Gru, ArchKind::Lstm] {
        let err = check(kind, Dropout::Off, vec![0.0, 0.0]);
        assert!(err < 1e-4, "{kind}: max relative error {err:e}");
    }
}

#[test]
fn backprop_with_fixed_dropout_masks() {
    // With a seeded dropout source the masks are identical in every
    // evaluation, so the loss is a smooth function of the parameters again.
    for kind in [ArchKind::Ann, ArchKind::Gru, ArchKind::Lstm] {
        let err = check(kind, Dropout::Seeded(4), vec![0.3, 0.3]);
        assert!(err < 1e-4, "{kind}: max relative error {err:e}");
    }
}

#[test]
fn deeper_and_wider_lstm() {
    let arch = ArchSpec::new(ArchKind::Lstm, 7)
        .with_hidden(vec![6, 5, 4])
        .without_dropout();
    let model = Model::new(&arch).unwrap();
    let params = init_model(&arch, 2).unwrap();
    let ds = relabel(&model, &params, &inputs(7, 3, 5));
    let idx = [0, 1, 2];
    let (_, grad) = model
        .loss_and_grad(&params, &ds, &idx, Dropout::Off)
        .unwrap();
    let coords: Vec<usize> = (0..params.len()).step_by(37).collect();
    let numeric = finite_diff_gradient(
        |p| Ok(model.loss_and_grad(p, &ds, &idx, Dropout::Off)?.0),
        &params,
        &coords,
        1e-5,
    )
    .unwrap();
    for (&k, &n) in coords.iter().zip(&numeric) {
        assert!(relative_error(grad.values()[k], n) < 1e-4, "coordinate {k}");
    }
}
