mod common;

use bounded::features::{FeatureMask, FeatureMatrix, FeatureSet, FEATURE_COLUMNS};
use bounded::io::ClassCode;
use bounded::net::{
    classify, decode_model, encode_model, train, Architecture, Model, Standardization, TrainConfig, TrainingSet,
};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn set_of(matrices: &[FeatureMatrix], scales: Vec<usize>) -> FeatureSet {
    FeatureSet::from_matrices(scales, FeatureMask::ALL, matrices).unwrap()
}

#[test]
fn gradients_match_finite_differences() {
    let mut r = rng(21);
    for case in 0..12 {
        let (model, batch) = gradient_case(&mut r, 8, 1e-3);
        let dropout = (case % 2 == 1).then_some(case as u64);
        let err = gradient_check(&model, &batch, 2.0, dropout, 1e-5, 1e-6);
        assert!(err < 1e-4, "case {case}: relative error {err}");
    }
}

#[test]
fn shared_fusion_gradient_is_the_sum_over_pairs() {
    let mut r = rng(22);
    for _ in 0..4 {
        let (model, batch) = gradient_case(&mut r, 8, 1e-3);
        let (_, grad) = model.backward(&batch, 2.0, false, &mut rng(0)).unwrap();
        let layout = model.layout();
        let naive = NaiveNet::unshare(&model);
        let h = 1e-5;
        for (j, i) in layout.fusion.parameters().enumerate() {
            let mut sum = 0.0;
            for p in 0..layout.pairs {
                let mut plus = NaiveNet::unshare(&model);
                plus.fusion[p][j] += h;
                let mut minus = NaiveNet::unshare(&model);
                minus.fusion[p][j] -= h;
                sum += (plus.loss(&batch, 2.0) - minus.loss(&batch, 2.0)) / (2.0 * h);
            }
            assert!(relative_error(grad[i], sum, 1e-6) < 1e-4, "param {i}: {} vs {sum}", grad[i]);
        }
        // The naive forward agrees with the library at inference.
        for (fm, _) in &batch {
            let a = model.forward(fm, false, &mut rng(0)).unwrap();
            let b = naive.forward(fm).probabilities;
            assert!(max_abs_diff(&a, &b) < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_form_a_distribution(seed in any::<u64>(), training in any::<bool>()) {
        let mut r = rng(seed);
        let m = r.random_range(2..=4);
        let two_class = r.random_bool(0.3);
        let model = random_model(&mut r, m, two_class);
        let fm = random_matrix(&mut r, m);
        let p = model.forward(&fm, training, &mut r).unwrap();
        prop_assert_eq!(p.len(), model.classes());
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn shifting_all_logits_keeps_predictions(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let mut r = rng(seed);
        let model = random_model(&mut r, 4, false);
        let matrices: Vec<FeatureMatrix> = (0..50).map(|_| random_matrix(&mut r, 4)).collect();
        let set = set_of(&matrices, model.scales.clone());
        let mut shifted = model.clone();
        let biases = shifted.layout().output.biases();
        for b in &mut shifted.params[biases] {
            *b += shift;
        }
        let a = classify(&model, &set).unwrap();
        let b = classify(&shifted, &set).unwrap();
        prop_assert_eq!(a.predictions, b.predictions);
    }

    #[test]
    fn affine_column_changes_cancel_in_standardization(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = random_model(&mut r, 4, false);
        let matrices: Vec<FeatureMatrix> = (0..200).map(|_| random_matrix(&mut r, 4)).collect();
        let set = set_of(&matrices, model.scales.clone());
        let column = r.random_range(0..4 * FEATURE_COLUMNS);
        let a_scale: f64 = r.random_range(0.1..10.0);
        let shift: f64 = r.random_range(-20.0..20.0);
        let transformed: Vec<FeatureMatrix> = matrices
            .iter()
            .map(|fm| {
                let mut flat = fm.flatten();
                flat[column] = a_scale * flat[column] + shift;
                FeatureMatrix::from_flat(&flat).unwrap()
            })
            .collect();
        let set2 = set_of(&transformed, model.scales.clone());
        let mut m1 = model.clone();
        m1.standardization = Standardization::fit(&set).unwrap();
        let mut m2 = model.clone();
        m2.standardization = Standardization::fit(&set2).unwrap();
        let p1 = m1.predict_proba(&set).unwrap();
        let p2 = m2.predict_proba(&set2).unwrap();
        prop_assert!(max_abs_diff(&p1, &p2) < 1e-6);
    }
}

#[test]
fn dropout_preserves_expected_logits() {
    // With a unit leaky slope the network is affine between dropout masks,
    // so the log-odds are linear in the masks and their expectation over
    // masks equals the deterministic value.
    let mut r = rng(23);
    let mut model = random_model(&mut r, 4, true);
    model.arch.leaky_slope = 1.0;
    let layout = model.layout();
    for p in &mut model.params[layout.hidden1.offset..] {
        *p = p.abs() + 0.05;
    }
    for p in &mut model.params[layout.output.offset..layout.output.offset + layout.output.inputs] {
        *p = 0.0;
    }
    let fm = FeatureMatrix::from_flat(&vec![1.0; 4 * FEATURE_COLUMNS]).unwrap();
    for p in &mut model.params[layout.fusion.parameters()] {
        *p = p.abs();
    }
    let log_odds = |p: &[f64]| (p[1] / p[0]).ln();
    // Rescale the second output row so the log-odds stay far from underflow
    // under any mask.
    let row = layout.output.offset + layout.output.inputs..layout.output.offset + 2 * layout.output.inputs;
    let full = log_odds(&model.forward(&fm, false, &mut r).unwrap());
    let saved: Vec<f64> = model.params[row.clone()].to_vec();
    model.params[row.clone()].iter_mut().for_each(|p| *p = 0.0);
    let offset = log_odds(&model.forward(&fm, false, &mut r).unwrap());
    let alpha = 10.0 / (full - offset);
    for (p, s) in model.params[row].iter_mut().zip(saved) {
        *p = alpha * s;
    }
    let exact = log_odds(&model.forward(&fm, false, &mut r).unwrap());
    let draws = 100_000;
    let mut sum = 0.0;
    for _ in 0..draws {
        sum += log_odds(&model.forward(&fm, true, &mut r).unwrap());
    }
    let mean = sum / draws as f64;
    assert!(exact.abs() > 1.0);
    assert!(((mean - exact) / exact).abs() < 0.02, "mean {mean} vs {exact}");
}

fn separable_set(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> TrainingSet {
    let mut matrices = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut fm = random_matrix(r, 4);
        let margin: f64 = r.random_range(0.2..2.0);
        let sharp = r.random_bool(0.3);
        fm.rows[0].d_perp = if sharp { margin } else { -margin };
        matrices.push(fm);
        labels.push(if sharp { ClassCode::SharpEdge } else { ClassCode::NonEdge });
    }
    TrainingSet::new(set_of(&matrices, vec![128, 64, 32, 16]), labels).unwrap()
}

#[test]
fn separable_toy_is_learned() {
    let mut r = rng(24);
    let pool = separable_set(&mut r, 4000);
    let validation = separable_set(&mut r, 1000);
    let config = TrainConfig {
        iterations: 500,
        batch_size: 256,
        runs: 2,
        seed: 3,
        two_class: true,
        ..TrainConfig::default()
    };
    let outcome = train(&pool, &validation, &config).unwrap();
    for run in &outcome.runs {
        assert!(outcome.best_val_loss() <= run.final_val_loss.unwrap());
    }
    let result = classify(&outcome.model, &validation.features).unwrap();
    assert!(result.predictions.iter().all(|c| *c != ClassCode::Boundary));
    let correct = result
        .predictions
        .iter()
        .zip(&validation.labels)
        .filter(|(p, l)| p == l)
        .count();
    let accuracy = correct as f64 / validation.len() as f64;
    assert!(accuracy >= 0.99, "accuracy {accuracy}");
}

#[test]
fn saved_model_predicts_identically() {
    let mut r = rng(25);
    for two_class in [false, true] {
        let model = random_model(&mut r, 4, two_class);
        let matrices: Vec<FeatureMatrix> = (0..1000).map(|_| random_matrix(&mut r, 4)).collect();
        let set = set_of(&matrices, model.scales.clone());
        let bytes = encode_model(&model);
        let back = decode_model(&bytes).unwrap();
        assert_eq!(encode_model(&back), bytes);
        let a = classify(&model, &set).unwrap();
        let b = classify(&back, &set).unwrap();
        assert_eq!(a.predictions, b.predictions);
        assert_eq!(a.probabilities, b.probabilities);
        if two_class {
            assert!(a.predictions.iter().all(|c| c.index() < 2));
        }
    }
}

#[test]
fn parameter_counts_follow_layer_widths() {
    for m in 2..=6 {
        for two_class in [false, true] {
            let a = Architecture::new(m, two_class);
            let c = if two_class { 2 } else { 3 };
            let expected = 24 * 12 + 12 + (m - 1) * 12 * 24 + 24 + 24 * 16 + 16 + 16 * c + c;
            assert_eq!(a.parameter_count(), expected);
        }
    }
    let m = Model::zeroed(
        Architecture::new(4, false),
        vec![128, 64, 32, 16],
        FeatureMask::ALL,
        Standardization::identity(48),
    )
    .unwrap();
    let p = m.forward(&random_matrix(&mut rng(1), 4), false, &mut rng(2)).unwrap();
    assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
}
