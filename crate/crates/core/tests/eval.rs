use std::collections::HashSet;

use enci_core::eval::{bench_graph, bench_pairs, edge_metrics, kmeans, kmeanspp_groups, BenchReport, BenchResults};
use enci_core::graph::Adjacency;
use enci_core::lingam::GraphConfig;
use enci_core::synth::{rng_from_seed, MechanismKind, SynthSpec};
use enci_core::EnciError;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn metric_examples() {
    let truth = Adjacency::from_edges(3, &[(0, 1), (1, 2)]);
    let est = Adjacency::from_edges(3, &[(0, 1), (2, 1)]);
    let m = edge_metrics(&est, &truth).unwrap();
    assert_eq!((m.true_positive, m.false_positive, m.false_negative), (1, 1, 1));
    assert_eq!((m.precision, m.recall), (0.5, 0.5));

    let m = edge_metrics(&Adjacency::empty(3), &truth).unwrap();
    assert_eq!((m.precision, m.recall), (0.0, 0.0));
    let m = edge_metrics(&Adjacency::empty(3), &Adjacency::empty(3)).unwrap();
    assert_eq!((m.precision, m.recall), (1.0, 1.0));
    assert!(edge_metrics(&Adjacency::empty(2), &truth).is_err());
}

fn two_blobs(seed: u64, n: usize) -> (DMatrix<f64>, Vec<usize>) {
    let mut rng = rng_from_seed(seed);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let data = DMatrix::from_fn(n, 2, |i, _| if labels[i] == 0 { -5.0 } else { 5.0 } + noise.sample(&mut rng));
    (data, labels)
}

#[test]
fn kmeans_separates_blobs() {
    for s in 0..10 {
        let (data, truth) = two_blobs(s, 400);
        let (labels, centroids) = kmeans(&data, 2, &mut rng_from_seed(s + 100)).unwrap();
        assert_eq!(centroids.shape(), (2, 2));
        let same = labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
        let matched = same.max(400 - same);
        assert!(matched * 100 >= 99 * 400, "seed {s}: {matched}/400");
    }
}

#[test]
fn kmeans_rejects_too_few_rows() {
    let data = DMatrix::from_fn(5, 2, |i, j| (i + j) as f64);
    assert!(kmeans(&data, 3, &mut rng_from_seed(0)).is_err());
}

#[test]
fn single_cluster_gives_plain_subsamples() {
    let data = DMatrix::from_fn(200, 2, |i, j| (i * 2 + j) as f64);
    let grouped = kmeanspp_groups(&data, None, 1, 20, 30, &mut rng_from_seed(3)).unwrap();
    assert_eq!(grouped.n_groups(), 30);
    assert!(grouped.groups().iter().all(|g| g.shape() == (20, 2)));
}

#[test]
fn subsample_groups_have_distinct_rows() {
    let mut rng = rng_from_seed(4);
    // The first column is the row index, so duplicates are visible.
    let data = DMatrix::from_fn(5000, 3, |i, j| if j == 0 { i as f64 } else { rng.random_range(-1.0..1.0) });
    let names = vec!["id".to_string(), "a".into(), "b".into()];
    let grouped = kmeanspp_groups(&data, Some(names), 15, 50, 1500, &mut rng_from_seed(5)).unwrap();
    assert_eq!(grouped.n_groups(), 1500);
    assert_eq!(grouped.variables()[0], "id");
    for g in grouped.groups() {
        assert_eq!(g.nrows(), 50);
        let ids: HashSet<u64> = g.column(0).iter().map(|v| *v as u64).collect();
        assert_eq!(ids.len(), 50);
    }
}

#[test]
fn no_cluster_large_enough() {
    let data = DMatrix::from_fn(40, 1, |i, _| i as f64);
    let err = kmeanspp_groups(&data, None, 4, 50, 10, &mut rng_from_seed(6)).unwrap_err();
    assert!(matches!(err, EnciError::NoEligibleCluster(50)));
}

#[test]
fn pair_bench_is_deterministic_and_consistent() {
    let spec = SynthSpec {
        n_groups: 40,
        ..SynthSpec::pair(7, MechanismKind::Multiplicative)
    };
    let a = bench_pairs(&spec, &[0.5, 1.0], 0.05, 4).unwrap().without_timing();
    let b = bench_pairs(&spec, &[0.5, 1.0], 0.05, 4).unwrap().without_timing();
    assert_eq!(a.to_json(), b.to_json());
    assert!(a.aggregates_consistent(1e-12));
    let BenchResults::Pairs { runs, summary, best } = &a.results else {
        panic!("pair results expected");
    };
    assert_eq!(runs.len(), 8);
    assert_eq!(summary.len(), 2);
    assert!(summary.iter().all(|s| s.accuracy <= best.accuracy));
    assert_eq!(BenchReport::from_json(&a.to_json()).unwrap(), a);
}

#[test]
fn graph_bench_is_deterministic_and_consistent() {
    let spec = SynthSpec {
        n_groups: 200,
        ..SynthSpec::tsg(8, 4)
    };
    let thresholds = [0.01, 0.05, 0.1];
    let run = || bench_graph(&spec, &GraphConfig::default(), 3, &thresholds).unwrap().without_timing();
    let a = run();
    assert_eq!(a.to_json(), run().to_json());
    assert!(a.aggregates_consistent(1e-12));
    let BenchResults::Graph { runs, summary } = &a.results else {
        panic!("graph results expected");
    };
    assert_eq!(runs.len(), 9);
    for (s, t) in summary.iter().zip(thresholds) {
        assert_eq!(s.prune_threshold, t);
        let rows: Vec<_> = runs.iter().filter(|r| r.prune_threshold == t).collect();
        let mean = rows.iter().map(|r| r.metrics.precision).sum::<f64>() / rows.len() as f64;
        assert!((mean - s.mean_precision).abs() <= 1e-12);
    }
    assert!(a.to_table().contains("mean_precision"));
}

#[test]
fn tampered_report_is_inconsistent() {
    let spec = SynthSpec {
        n_groups: 30,
        ..SynthSpec::pair(9, MechanismKind::Multiplicative)
    };
    let mut r = bench_pairs(&spec, &[1.0], 0.05, 2).unwrap();
    if let BenchResults::Pairs { summary, .. } = &mut r.results {
        summary[0].accuracy += 0.5;
    }
    assert!(!r.aggregates_consistent(1e-12));
}

fn random_dag() -> impl Strategy<Value = Adjacency> {
    (2usize..9).prop_flat_map(|p| {
        prop::collection::vec(any::<bool>(), p * p).prop_map(move |bits| {
            let mut a = Adjacency::empty(p);
            for i in 0..p {
                for j in i + 1..p {
                    if bits[i * p + j] {
                        a.set(i, j, true);
                    }
                }
            }
            a
        })
    })
}

proptest! {
    #[test]
    fn truth_against_itself_is_perfect(truth in random_dag()) {
        let m = edge_metrics(&truth, &truth).unwrap();
        prop_assert_eq!((m.precision, m.recall), (1.0, 1.0));
        prop_assert_eq!(m.false_positive + m.false_negative, 0);
    }

    #[test]
    fn reversed_edges_never_count(truth in random_dag()) {
        let p = truth.n_nodes();
        let mut rev = Adjacency::empty(p);
        for (a, b) in truth.edges() {
            rev.set(b, a, true);
        }
        let m = edge_metrics(&rev, &truth).unwrap();
        prop_assert_eq!(m.true_positive, 0);
        prop_assert_eq!(m.false_positive, truth.n_edges());
    }
}
