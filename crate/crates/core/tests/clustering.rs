use dean_core::clustering::{agglomerate, median_centroids, Clustering, Linkage};
use dean_core::prob::{pairwise_distances, DistanceMatrix, ProbVec};
use dean_core::rng::rng_from;
use dean_core::scoring::ImportanceScores;
use rand::Rng;

/// Textbook agglomeration: recompute every cluster-pair linkage from the
/// original distances at every step.
fn naive(d: &DistanceMatrix, n_clusters: usize, linkage: Linkage) -> Vec<usize> {
    let n = d.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while clusters.len() > n_clusters {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let pairs = clusters[a]
                    .iter()
                    .flat_map(|&i| clusters[b].iter().map(move |&j| (i, j)));
                let v = match linkage {
                    Linkage::Single => pairs.map(|(i, j)| d.get(i, j)).fold(f64::INFINITY, f64::min),
                    Linkage::Complete => pairs.map(|(i, j)| d.get(i, j)).fold(0.0, f64::max),
                    Linkage::Average => {
                        let m = (clusters[a].len() * clusters[b].len()) as f64;
                        pairs.map(|(i, j)| d.get(i, j)).sum::<f64>() / m
                    }
                };
                // Clusters stay ordered by smallest member, so (a, b) order
                // is the lexicographic order of cluster ids.
                if best.map_or(true, |(bv, _, _)| v < bv) {
                    best = Some((v, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("at least two clusters");
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        clusters[a].sort_unstable();
    }
    let mut assignment = vec![0; n];
    for (c, members) in clusters.iter().enumerate() {
        for &m in members {
            assignment[m] = c;
        }
    }
    assignment
}

fn random_matrix(seed: u64, n: usize, grid: Option<u32>) -> DistanceMatrix {
    let mut rng = rng_from(seed, &[]);
    let mut dense = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = match grid {
                Some(g) => rng.gen_range(1..=g) as f64 / g as f64,
                None => rng.gen::<f64>(),
            };
            dense[i * n + j] = v;
            dense[j * n + i] = v;
        }
    }
    DistanceMatrix::from_dense(n, &dense, (0..n).collect()).unwrap()
}

#[test]
fn average_linkage_matches_naive_merging() {
    for seed in 0..150 {
        let n = 3 + (seed as usize % 22);
        let d = random_matrix(seed, n, None);
        for k in [1, 2, n / 2, n - 1] {
            let k = k.max(1);
            let fast = agglomerate(&d, k, Linkage::Average).unwrap();
            assert_eq!(fast.assignment(), naive(&d, k, Linkage::Average), "seed {seed}, n {n}, k {k}");
        }
    }
}

#[test]
fn single_and_complete_match_naive_with_ties() {
    // Distances on a coarse grid force many exact ties.
    for seed in 0..150 {
        let n = 3 + (seed as usize % 18);
        let d = random_matrix(1000 + seed, n, Some(4));
        for linkage in [Linkage::Single, Linkage::Complete] {
            for k in 1..n {
                let fast = agglomerate(&d, k, linkage).unwrap();
                assert_eq!(fast.assignment(), naive(&d, k, linkage), "{linkage} seed {seed} n {n} k {k}");
            }
        }
    }
}

#[test]
fn planted_softmax_blobs_are_recovered() {
    let prototypes = [[0.9, 0.05, 0.05], [0.05, 0.9, 0.05], [0.05, 0.05, 0.9]];
    let mut rng = rng_from(5, &[]);
    let mut probs = Vec::new();
    let mut truth = Vec::new();
    for i in 0..60 {
        let c = (i * 7) % 3;
        let noisy: Vec<f64> = prototypes[c].iter().map(|&p| p * (1.0 + 0.2 * rng.gen::<f64>())).collect();
        let s: f64 = noisy.iter().sum();
        probs.push(ProbVec::new(noisy.into_iter().map(|v| v / s).collect()).unwrap());
        truth.push(c);
    }
    let d = pairwise_distances(&probs, None).unwrap();
    for linkage in [Linkage::Single, Linkage::Complete, Linkage::Average] {
        let clustering = agglomerate(&d, 3, linkage).unwrap();
        let a = clustering.assignment();
        for i in 0..60 {
            for j in 0..60 {
                assert_eq!(a[i] == a[j], truth[i] == truth[j]);
            }
        }
    }
}

#[test]
fn partition_and_centroid_invariants() {
    for seed in 0..40 {
        let n = 5 + seed as usize;
        let d = random_matrix(2000 + seed, n, None);
        let mut rng = rng_from(seed, &[1]);
        let scores = ImportanceScores::new((0..n).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let k = 1 + seed as usize % n;
        let c = agglomerate(&d, k, Linkage::Average).unwrap();
        assert_eq!(c, agglomerate(&d, k, Linkage::Average).unwrap());
        assert_eq!(c.n_clusters(), k);
        let members = c.members();
        assert_eq!(members.iter().map(Vec::len).sum::<usize>(), n);
        assert!(members.iter().all(|m| !m.is_empty()));
        let c = median_centroids(c, &scores).unwrap();
        for (cluster, &centroid) in c.centroids().unwrap().iter().enumerate() {
            assert_eq!(c.assignment()[centroid], cluster);
            let mut member_scores: Vec<f64> = members[cluster].iter().map(|&m| scores.as_slice()[m]).collect();
            member_scores.sort_by(f64::total_cmp);
            assert_eq!(scores.as_slice()[centroid], member_scores[(member_scores.len() - 1) / 2]);
        }
    }
}

#[test]
fn four_point_median_example() {
    let c = Clustering::from_assignment(vec![0, 0, 0, 0]).unwrap();
    let s = ImportanceScores::new(vec![0.9, 0.1, 0.7, 0.5]).unwrap();
    assert_eq!(median_centroids(c, &s).unwrap().centroids().unwrap(), &[3]);
}
