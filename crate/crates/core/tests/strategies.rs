use dean_core::classifier::{init_model, train};
use dean_core::clustering::Linkage;
use dean_core::data::{make_blobs, Dataset};
use dean_core::rng::rng_from;
use dean_core::strategies::{coverage_radius, kcenter_greedy, select, ALState, SelectionContext, StrategyId};
use dean_core::{LabeledSet, Mlp, ModelConfig};
use ndarray::{Array2, Axis};

fn fixture(pool_size: usize) -> (Dataset, Mlp, ALState) {
    let data = make_blobs(3, 40, 2, 3.0, 8).unwrap();
    let labeled: Vec<usize> = vec![0, 1, 40, 41, 80, 81];
    let labels: Vec<usize> = labeled.iter().map(|&i| data.labels[i]).collect();
    let pool: Vec<usize> = (0..data.len()).filter(|i| !labeled.contains(i)).take(pool_size).collect();
    let set = LabeledSet::new(data.features.select(Axis(0), &labeled), labels.clone()).unwrap();
    let config = ModelConfig {
        hidden_dims: vec![8],
        epochs: 20,
        seed: 3,
        ..ModelConfig::new(2, 3)
    };
    let model = train(init_model(&config).unwrap(), &set, false).unwrap().model;
    (data, model, ALState::new(labeled, labels, pool).unwrap())
}

fn context<'a>(data: &'a Dataset, model: &'a Mlp, state: &'a ALState, beta: f64) -> SelectionContext<'a> {
    SelectionContext {
        model,
        features: data.features.view(),
        state,
        passes: 4,
        score_seed: 17,
        beta,
        linkage: Linkage::Average,
        max_cluster_pool: None,
    }
}

#[test]
fn every_strategy_returns_distinct_pool_indices() {
    let (data, model, state) = fixture(usize::MAX);
    let ctx = context(&data, &model, &state, 2.0);
    for strategy in StrategyId::ALL {
        for seed in 0..3 {
            let sel = select(strategy, &ctx, 10, &mut rng_from(seed, &[])).unwrap();
            assert_eq!(sel.indices.len(), 10, "{strategy}");
            assert!(!sel.truncated);
            let mut sorted = sel.indices.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 10, "{strategy} repeated an index");
            assert!(sel.indices.iter().all(|i| state.pool.binary_search(i).is_ok()));
            assert!(sel.indices.iter().all(|i| !state.labeled.contains(i)));
            assert_eq!(sel.dean.is_some(), strategy == StrategyId::Dean);
        }
    }
}

#[test]
fn small_pools_are_returned_whole() {
    let (data, model, state) = fixture(7);
    let ctx = context(&data, &model, &state, 2.0);
    for strategy in StrategyId::ALL {
        let sel = select(strategy, &ctx, 7, &mut rng_from(1, &[])).unwrap();
        assert_eq!(sel.indices, state.pool);
        assert!(!sel.truncated);
        let sel = select(strategy, &ctx, 9, &mut rng_from(1, &[])).unwrap();
        assert_eq!(sel.indices, state.pool);
        assert!(sel.truncated);
    }
}

#[test]
fn dean_at_zero_beta_matches_random_frequencies() {
    let (data, model, state) = fixture(10);
    let ctx = context(&data, &model, &state, 0.0);
    let trials = 100_000;
    let mut counts = [[0usize; 10]; 2];
    for (k, strategy) in [StrategyId::Dean, StrategyId::Random].into_iter().enumerate() {
        let mut rng = rng_from(2024, &[k as u64]);
        for _ in 0..trials {
            for i in select(strategy, &ctx, 3, &mut rng).unwrap().indices {
                counts[k][state.pool.binary_search(&i).unwrap()] += 1;
            }
        }
    }
    let max_dev = (0..10)
        .map(|i| (counts[0][i] as f64 - counts[1][i] as f64).abs() / trials as f64)
        .fold(0.0, f64::max);
    assert!(max_dev <= 0.01, "max per-index deviation {max_dev}: {counts:?}");
    for k in 0..2 {
        for i in 0..10 {
            let rate = counts[k][i] as f64 / trials as f64;
            assert!((rate - 0.3).abs() <= 0.01, "inclusion rate {rate} at {i}");
        }
    }
}

#[test]
fn top_score_strategies_take_the_highest_scores() {
    let (data, model, state) = fixture(usize::MAX);
    let ctx = context(&data, &model, &state, 2.0);
    let a = select(StrategyId::Bald, &ctx, 5, &mut rng_from(1, &[])).unwrap();
    let b = select(StrategyId::Bald, &ctx, 5, &mut rng_from(99, &[])).unwrap();
    assert_eq!(a, b, "top-b ignores the selection stream");
}

#[test]
fn coverage_radius_shrinks_with_budget() {
    let mut rng = rng_from(4, &[]);
    let pool = Array2::from_shape_simple_fn((60, 3), || rand::Rng::gen::<f64>(&mut rng));
    let labeled = Array2::from_shape_simple_fn((4, 3), || rand::Rng::gen::<f64>(&mut rng));
    let mut prev = f64::INFINITY;
    for b in 0..=60 {
        let picks = kcenter_greedy(labeled.view(), pool.view(), b).unwrap();
        assert_eq!(picks.len(), b);
        let r = coverage_radius(labeled.view(), pool.view(), &picks);
        assert!(r <= prev);
        prev = r;
    }
    assert_eq!(prev, 0.0);
}

#[test]
fn kcenter_line_example_matches_exhaustive_search() {
    let line: Vec<f64> = (0..=10).map(f64::from).collect();
    let pool = Array2::from_shape_vec((11, 1), line.clone()).unwrap();
    let labeled = Array2::from_shape_vec((1, 1), vec![5.0]).unwrap();
    let picks = kcenter_greedy(labeled.view(), pool.view(), 2).unwrap();
    // Exhaustive check that the first pick maximizes the min distance to {5}.
    let best = line.iter().map(|&x| (x - 5.0).abs()).fold(0.0, f64::max);
    assert_eq!((line[picks[0]] - 5.0).abs(), best);
    let mut as_set = picks.clone();
    as_set.sort_unstable();
    assert_eq!(as_set, vec![0, 10]);
}
