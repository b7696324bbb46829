use dean_core::classifier::{init_model, project_column_simplex, train, Trainer};
use dean_core::data::make_blobs;
use dean_core::oracle::make_channel;
use dean_core::prob::{js_distance, ProbVec};
use dean_core::rng::rng_from;
use dean_core::{ChannelMatrix, LabeledSet, ModelConfig};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn blobs_set(classes: usize, per_class: usize, dim: usize, sep: f64, seed: u64) -> LabeledSet {
    let d = make_blobs(classes, per_class, dim, sep, seed).unwrap();
    LabeledSet::new(d.features, d.labels).unwrap()
}

fn small_config(dim: usize, classes: usize) -> ModelConfig {
    ModelConfig {
        hidden_dims: vec![16],
        epochs: 30,
        seed: 11,
        ..ModelConfig::new(dim, classes)
    }
}

fn accuracy(model: &dean_core::Mlp, set: &LabeledSet) -> f64 {
    let probs = model.predict_batch(set.features.view()).unwrap();
    let hits = probs
        .rows()
        .into_iter()
        .zip(&set.labels)
        .filter(|(row, &y)| {
            let best = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a))).unwrap();
            best == y
        })
        .count();
    hits as f64 / set.len() as f64
}

#[test]
fn separable_blobs_are_fit() {
    let set = blobs_set(2, 100, 2, 10.0, 1);
    let trained = train(init_model(&small_config(2, 2)).unwrap(), &set, false).unwrap();
    assert!(accuracy(&trained.model, &set) >= 0.99);
    assert!(trained.channel.is_none());
}

#[test]
fn clean_labels_keep_the_channel_near_identity() {
    let set = blobs_set(3, 60, 2, 8.0, 2);
    let trained = train(init_model(&small_config(2, 3)).unwrap(), &set, true).unwrap();
    let w = trained.channel.expect("denoising run returns W");
    assert!(w.is_column_stochastic());
    for k in 0..3 {
        assert!(w.get(k, k) >= 0.8, "diagonal {k}: {}", w.get(k, k));
    }
}

#[test]
fn training_is_deterministic() {
    let set = blobs_set(3, 40, 4, 3.0, 3);
    let a = train(init_model(&small_config(4, 3)).unwrap(), &set, true).unwrap();
    let b = train(init_model(&small_config(4, 3)).unwrap(), &set, true).unwrap();
    assert_eq!(a.model.parameters(), b.model.parameters());
    assert_eq!(a.channel, b.channel);
}

#[test]
fn every_step_keeps_columns_on_the_simplex() {
    let set = blobs_set(4, 30, 3, 2.0, 4);
    let mut noisy = set.labels.clone();
    let mut rng = rng_from(4, &[]);
    for y in noisy.iter_mut() {
        if rng.gen::<f64>() < 0.4 {
            *y = rng.gen_range(0..4);
        }
    }
    let mut trainer = Trainer::new(init_model(&small_config(3, 4)).unwrap(), true);
    for start in (0..set.len()).step_by(8) {
        let end = (start + 8).min(set.len());
        let x = set.features.slice(ndarray::s![start..end, ..]);
        trainer.step(x, &noisy[start..end]).unwrap();
        assert!(trainer.channel().unwrap().simplex_violation() <= 1e-9);
    }
}

#[test]
fn penultimate_features_separate_classes() {
    let set = blobs_set(2, 50, 2, 8.0, 5);
    let trained = train(init_model(&small_config(2, 2)).unwrap(), &set, false).unwrap();
    let feats = trained.model.penultimate_batch(set.features.view()).unwrap();
    assert_eq!(feats.ncols(), 16);
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0, 0.0, 0);
    for i in 0..set.len() {
        for j in i + 1..set.len() {
            let d = (&feats.row(i) - &feats.row(j)).mapv(|v| v * v).sum().sqrt();
            if set.labels[i] == set.labels[j] {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    assert!(intra / n_intra as f64 <= inter / n_inter as f64);
}

#[test]
fn dropout_passes_on_a_trained_model_differ() {
    let set = blobs_set(3, 40, 2, 2.0, 6);
    let config = ModelConfig {
        dropout_rate: 0.5,
        ..small_config(2, 3)
    };
    let trained = train(init_model(&config).unwrap(), &set, false).unwrap();
    let x = set.features.row(0).to_vec();
    let passes = trained.model.stochastic_passes(&x, 100, 9, 0).unwrap();
    let mut max_d: f64 = 0.0;
    let rows: Vec<ProbVec> = passes.rows().map(|r| ProbVec::new(r.to_vec()).unwrap()).collect();
    for a in &rows {
        for b in &rows {
            max_d = max_d.max(js_distance(a, b).unwrap());
        }
    }
    assert!(max_d > 0.0);
    assert_eq!(passes, trained.model.stochastic_passes(&x, 100, 9, 0).unwrap());
}

#[test]
fn no_dropout_passes_equal_predict() {
    let config = ModelConfig {
        dropout_rate: 0.0,
        ..small_config(3, 3)
    };
    let model = init_model(&config).unwrap();
    let x = [0.3, -1.0, 2.0];
    let passes = model.stochastic_passes(&x, 5, 1, 7).unwrap();
    let p = model.predict(&x).unwrap();
    for row in passes.rows() {
        assert_eq!(row, passes.row(0));
        for (a, b) in row.iter().zip(p.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_output_layer_predicts_uniform() {
    let mut model = init_model(&small_config(3, 4)).unwrap();
    let last = model.layers_mut().last_mut().unwrap();
    last.weights.fill(0.0);
    last.bias.fill(0.0);
    let p = model.predict(&[1.0, 2.0, 3.0]).unwrap();
    assert!(p.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    assert!(model.predict(&[1.0]).is_err());
}

#[test]
fn projection_examples() {
    let p = project_column_simplex(&[0.7, 0.3]).unwrap();
    assert!((p.as_slice()[0] - 0.7).abs() < 1e-15 && (p.as_slice()[1] - 0.3).abs() < 1e-15);
    let p = project_column_simplex(&[0.8, 0.4]).unwrap();
    assert!((p.as_slice()[0] - 0.7).abs() < 1e-12 && (p.as_slice()[1] - 0.3).abs() < 1e-12);
    assert_eq!(project_column_simplex(&[5.0, -3.0]).unwrap().as_slice(), &[1.0, 0.0]);
    assert!(project_column_simplex(&[f64::NAN, 1.0]).is_err());
}

proptest! {
    #[test]
    fn channel_output_is_a_distribution(
        raw in proptest::collection::vec(0.0f64..1.0, 16),
        cols in proptest::collection::vec(0.01f64..1.0, 16),
    ) {
        let p_sum: f64 = raw[..4].iter().sum::<f64>() + 1e-9;
        let p: Vec<f64> = raw[..4].iter().map(|v| (v + 1e-9 / 4.0) / p_sum).collect();
        let col_sums: Vec<f64> = (0..4).map(|j| (0..4).map(|i| cols[i * 4 + j]).sum()).collect();
        let entries: Vec<f64> = (0..16).map(|e| cols[e] / col_sums[e % 4]).collect();
        let w = ChannelMatrix::from_rows(4, entries).unwrap();
        let out = w.apply(&p);
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(out.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn projection_is_idempotent(v in proptest::collection::vec(-5.0f64..5.0, 2..8)) {
        let once = project_column_simplex(&v).unwrap();
        let twice = project_column_simplex(once.as_slice()).unwrap();
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn symmetric_channel_columns_sum_to_one() {
    for k in 2..12 {
        for step in 0..=20 {
            let w = make_channel(k, step as f64 / 20.0).unwrap();
            for j in 0..k {
                let s: f64 = w.column(j).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
    let w = make_channel(10, 0.3).unwrap();
    assert!((w.get(0, 0) - 0.7).abs() < 1e-15);
    assert!((w.get(1, 0) - 0.3 / 9.0).abs() < 1e-15);
    let flip = make_channel(2, 1.0).unwrap();
    assert_eq!(flip.rows(), &[0.0, 1.0, 1.0, 0.0]);
    assert!(make_channel(1, 0.1).is_err());
    assert!(make_channel(3, 1.1).is_err());
}

#[test]
fn labeled_set_rejects_mismatched_lengths() {
    assert!(LabeledSet::new(Array2::zeros((3, 2)), vec![0, 1]).is_err());
}
