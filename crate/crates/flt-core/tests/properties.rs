//! Property tests for the structural invariants.

use proptest::prelude::*;

use flt_core::data::{partition_pathological, Dataset, PartitionMode, PartitionSpec};
use flt_core::federation::{aggregate_clustered, aggregate_full, row_normalize, ParamMatrix};
use flt_core::relatedness::{build_adjacency, threshold};

fn group_strategy() -> impl Strategy<Value = Vec<Vec<Vec<f64>>>> {
    // 2..6 clients, each with 1..4 points in 2-D
    prop::collection::vec(
        prop::collection::vec(
            prop::collection::vec(-10.0..10.0f64, 2),
            1..4,
        ),
        2..6,
    )
}

proptest! {
    #[test]
    fn adjacency_symmetric_zero_diagonal(groups in group_strategy(), gamma in 0.1..5.0f64) {
        let a = build_adjacency(&groups).unwrap();
        let m = groups.len();
        for i in 0..m {
            prop_assert_eq!(a[i][i], 0.0);
            for j in 0..m {
                prop_assert_eq!(a[i][j], a[j][i]);
                prop_assert!(a[i][j] >= 0.0);
            }
        }
        let t = threshold(&a, gamma);
        for i in 0..m {
            prop_assert_eq!(t[i][i], 1.0);
            for j in 0..m {
                prop_assert_eq!(t[i][j], t[j][i]);
            }
        }
    }

    #[test]
    fn row_normalized_rows_sum_to_one(
        groups in group_strategy(),
        gamma in 0.1..5.0f64,
        raw_p in prop::collection::vec(0.1..10.0f64, 6),
    ) {
        let a = build_adjacency(&groups).unwrap();
        let m = groups.len();
        let t = threshold(&a, gamma);
        let total: f64 = raw_p[..m].iter().sum();
        let p: Vec<f64> = raw_p[..m].iter().map(|v| v / total).collect();
        let bar = row_normalize(&t, &p);
        for i in 0..m {
            let s: f64 = bar[i].iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12, "row {} sums to {}", i, s);
            for j in 0..m {
                // positive aggregation weight only across adjacent pairs
                if bar[i][j] > 0.0 {
                    prop_assert_eq!(t[i][j], 1.0);
                }
            }
        }
    }

    #[test]
    fn aggregation_commutes_with_shared_affine_reparameterization(
        cols in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 3), 3..6),
        scale in 0.2..3.0f64,
        shift in prop::collection::vec(-2.0..2.0f64, 3),
        raw_p in prop::collection::vec(0.1..10.0f64, 6),
    ) {
        let m = cols.len();
        let w = ParamMatrix { dim: 3, columns: cols };
        let total: f64 = raw_p[..m].iter().sum();
        let p: Vec<f64> = raw_p[..m].iter().map(|v| v / total).collect();
        // block adjacency: first two clients together, rest together
        let mut adj = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                if (i < 2) == (j < 2) {
                    adj[i][j] = 1.0;
                }
            }
        }
        let bar = row_normalize(&adj, &p);
        let clusters: Vec<usize> = (0..m).map(|i| usize::from(i >= 2)).collect();

        let affine = |w: &ParamMatrix| ParamMatrix {
            dim: w.dim,
            columns: w
                .columns
                .iter()
                .map(|c| c.iter().zip(&shift).map(|(v, b)| scale * v + b).collect())
                .collect(),
        };

        // aggregate(affine(W)) == affine(aggregate(W)) for both rules
        let lhs_full = aggregate_full(&affine(&w), &bar).unwrap();
        let rhs_full = affine(&aggregate_full(&w, &bar).unwrap());
        let lhs_cl = aggregate_clustered(&affine(&w), &clusters, &p).unwrap();
        let rhs_cl = affine(&aggregate_clustered(&w, &clusters, &p).unwrap());
        for (a, b) in [(lhs_full, rhs_full), (lhs_cl, rhs_cl)] {
            for (ca, cb) in a.columns.iter().zip(&b.columns) {
                for (x, y) in ca.iter().zip(cb) {
                    prop_assert!((x - y).abs() < 1e-9, "{} vs {}", x, y);
                }
            }
        }
    }

    #[test]
    fn pathological_partition_complete_and_weighted(
        per_class in 6..20usize,
        clusters in 2..4usize,
        seed in 0..500u64,
    ) {
        let classes = clusters * 2;
        let n = per_class * classes;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let data = Dataset::from_rows(rows, labels, classes).unwrap();
        let spec = PartitionSpec {
            mode: PartitionMode::Pathological,
            m: clusters * 2,
            c: clusters,
            labels_per_cluster: 2,
            alpha: 1.0,
            delta: 0.0,
            test_fraction: 0.2,
            seed,
        };
        let part = partition_pathological(&data, &spec, 0).unwrap();
        // multiset equality: every source sample exactly once
        let mut seen = vec![0u32; n];
        for m in &part.manifest.clients {
            for &i in m.train_indices.iter().chain(&m.test_indices) {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        let sum_p: f64 = part.clients.iter().map(|c| c.p).sum();
        prop_assert!((sum_p - 1.0).abs() < 1e-12);
    }
}
