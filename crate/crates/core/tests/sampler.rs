use dean_core::clustering::{median_centroids, Clustering};
use dean_core::prob::DistanceMatrix;
use dean_core::rng::rng_from;
use dean_core::sampler::{gibbs_draw, marginal_prob, select_batch};
use dean_core::scoring::ImportanceScores;
use dean_core::verify::line_distances;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_instance(seed: u64, n: usize) -> (DistanceMatrix, Vec<usize>, Vec<f64>, Vec<usize>) {
    let mut rng = rng_from(seed, &[]);
    let points: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let d = line_distances(&points);
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    let n_centroids = 1 + rng.gen_range(0..n.min(4));
    let centroids = rows[..n_centroids].to_vec();
    let scores: Vec<f64> = (0..n_centroids).map(|_| rng.gen::<f64>()).collect();
    let drawn = rows[n_centroids..n_centroids + rng.gen_range(0..=n - n_centroids)].to_vec();
    (d, centroids, scores, drawn)
}

proptest! {
    #[test]
    fn marginals_sum_to_one(seed in 0u64..10_000, n in 2usize..20, beta in 0.0f64..50.0) {
        let (d, centroids, scores, drawn) = random_instance(seed, n);
        let total: f64 = (0..n)
            .filter(|s| !drawn.contains(s))
            .map(|s| marginal_prob(s, &drawn, beta, &d, &centroids, &scores).unwrap())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "sum {}", total);
    }

    #[test]
    fn farthest_sample_loses_mass_as_beta_grows(seed in 0u64..10_000, n in 2usize..20) {
        let (d, centroids, _, drawn) = random_instance(seed, n);
        let c = centroids[0];
        let leftover: Vec<usize> = (0..n).filter(|s| !drawn.contains(s)).collect();
        let far = *leftover
            .iter()
            .max_by(|&&a, &&b| d.get(c, a).total_cmp(&d.get(c, b)))
            .unwrap();
        let mut prev = f64::INFINITY;
        for step in 0..=50 {
            let beta = step as f64;
            let p = marginal_prob(far, &drawn, beta, &d, &[c], &[1.0]).unwrap();
            prop_assert!(p <= prev + 1e-12);
            prev = p;
        }
    }
}

#[test]
fn single_centroid_marginal_is_the_gibbs_probability() {
    let d = line_distances(&[0.0, 0.5, 1.0]);
    let z = 1.0 + (-1.0f64).exp() + (-2.0f64).exp();
    for (s, expected) in [(0, 1.0 / z), (1, (-1.0f64).exp() / z), (2, (-2.0f64).exp() / z)] {
        let p = marginal_prob(s, &[], 2.0, &d, &[0], &[0.7]).unwrap();
        assert!((p - expected).abs() < 1e-12);
    }
    assert!((0.665_240_955_774_821_2 - 1.0 / z).abs() < 1e-12);
}

#[test]
fn beta_zero_marginal_is_uniform() {
    let (d, centroids, scores, drawn) = random_instance(3, 12);
    let left = 12 - drawn.len();
    for s in (0..12).filter(|s| !drawn.contains(s)) {
        let p = marginal_prob(s, &drawn, 0.0, &d, &centroids, &scores).unwrap();
        assert!((p - 1.0 / left as f64).abs() < 1e-12);
    }
}

#[test]
fn capped_beta_draws_collapse_onto_free_anchors() {
    // Neighbours sit 1/11 apart, so a free anchor wins each draw with
    // probability 1 / (1 + 2e^-4.5 + ...) ~ 0.978.
    let points: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
    let d = line_distances(&points);
    let clustering = Clustering::from_assignment((0..12).map(|i| i / 3).collect()).unwrap();
    let scores = ImportanceScores::new((0..12).map(|i| 0.1 + (i % 3) as f64).collect()).unwrap();
    let clustering = median_centroids(clustering, &scores).unwrap();
    let (mut hits, mut draws) = (0usize, 0usize);
    for seed in 0..500 {
        let mut rng = rng_from(seed, &[]);
        let batch = select_batch(&scores, &d, &clustering, 50.0, 4, &mut rng).unwrap();
        for (k, t) in batch.trace.iter().enumerate() {
            if !batch.selected[..k].contains(&t.centroid) {
                draws += 1;
                hits += usize::from(t.sample == t.centroid);
            }
        }
        let mut sorted = batch.selected.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), batch.selected.len());
    }
    let rate = hits as f64 / draws as f64;
    assert!(rate > 0.96, "anchor hit rate {rate}");
}

#[test]
fn batches_are_reproducible() {
    let points: Vec<f64> = (0..30).map(|i| ((i * 37) % 30) as f64 / 29.0).collect();
    let d = line_distances(&points);
    let clustering = Clustering::from_assignment((0..30).map(|i| i / 5).collect()).unwrap();
    let scores = ImportanceScores::new((0..30).map(|i| i as f64 / 30.0).collect()).unwrap();
    let clustering = median_centroids(clustering, &scores).unwrap();
    let a = select_batch(&scores, &d, &clustering, 1.5, 10, &mut rng_from(9, &[])).unwrap();
    let b = select_batch(&scores, &d, &clustering, 1.5, 10, &mut rng_from(9, &[])).unwrap();
    assert_eq!(a, b);
}

#[test]
fn gibbs_draw_never_returns_drawn_rows() {
    let d = line_distances(&[0.0, 0.1, 0.2, 0.3, 0.4]);
    let mut rng = rng_from(1, &[]);
    for _ in 0..5000 {
        let s = gibbs_draw(2, &[1, 2, 3], 3.0, &d, &mut rng).unwrap();
        assert!(s == 0 || s == 4);
    }
}
