use super::*;
use crate::corpus::{CorpusManifest, Example};

#[test]
fn iid_split_matches_reference_shape() {
    let split = partition_unlabeled(72_461, 4, VolumeMode::Iid, 0).unwrap();
    assert_eq!(split.client_sizes, vec![18_115, 18_115, 18_115, 18_116]);
}

#[test]
fn single_client_takes_everything() {
    for mode in [VolumeMode::Iid, VolumeMode::Dirichlet(0.3)] {
        let split = partition_unlabeled(997, 1, mode, 5).unwrap();
        assert_eq!(split.client_sizes, vec![997]);
    }
}

#[test]
fn dirichlet_conserves_and_respects_min_size() {
    for seed in 0..50u64 {
        for alpha in [0.05, 0.1, 0.5, 1.0, 5.0] {
            let split =
                partition_unlabeled(1_000, 7, VolumeMode::Dirichlet(alpha), seed).unwrap();
            assert_eq!(split.total(), 1_000, "alpha {alpha} seed {seed}");
            assert!(split.client_sizes.iter().all(|&n| n >= 1));
        }
    }
}

#[test]
fn too_few_items_is_an_error() {
    let err = partition_unlabeled(3, 4, VolumeMode::Iid, 0).unwrap_err();
    assert!(matches!(err, PartitionError::TooFewItems { .. }));
    assert!(partition_unlabeled_with(8, 4, VolumeMode::Iid, 0, 3).is_err());
}

#[test]
fn dirichlet_rejects_bad_alpha() {
    assert!(partition_unlabeled(10, 2, VolumeMode::Dirichlet(0.0), 0).is_err());
    assert!(partition_unlabeled(10, 2, VolumeMode::Dirichlet(f64::NAN), 0).is_err());
}

#[test]
fn dirichlet_is_deterministic() {
    let a = partition_unlabeled(5_000, 4, VolumeMode::Dirichlet(0.2), 9).unwrap();
    let b = partition_unlabeled(5_000, 4, VolumeMode::Dirichlet(0.2), 9).unwrap();
    assert_eq!(a, b);
    let c = partition_unlabeled(5_000, 4, VolumeMode::Dirichlet(0.2), 10).unwrap();
    assert_ne!(a.client_sizes, c.client_sizes);
}

/// Smaller concentration must give more severe skew; the full Monte Carlo
/// version lives in the acceptance suite.
#[test]
fn skew_orders_by_concentration() {
    let mean_cv = |alpha: f64| {
        (0..200u64)
            .map(|s| {
                partition_unlabeled(10_000, 4, VolumeMode::Dirichlet(alpha), s)
                    .unwrap()
                    .coefficient_of_variation()
            })
            .sum::<f64>()
            / 200.0
    };
    let cvs: Vec<f64> = [1.0, 0.5, 0.2, 0.1].iter().map(|&a| mean_cv(a)).collect();
    assert!(cvs[0] < cvs[1] && cvs[1] < cvs[2] && cvs[2] < cvs[3], "{cvs:?}");
}

#[test]
fn materialize_deals_every_example_once() {
    let examples: Vec<Example<f64>> = (0..100)
        .map(|i| Example::new(i, crate::corpus::UNLABELED, vec![i as f64]))
        .collect();
    let pool = CorpusManifest::new(examples, Vec::new(), "t", 1).unwrap();
    let split = partition_unlabeled(100, 3, VolumeMode::Dirichlet(0.5), 4).unwrap();
    let shards = materialize_volume_split(&pool, &split).unwrap();
    assert_eq!(shards.len(), 3);
    let mut all_ids = std::collections::BTreeSet::new();
    for (shard, &size) in shards.iter().zip(&split.client_sizes) {
        assert_eq!(shard.len(), size);
        all_ids.extend(shard.ids());
    }
    assert_eq!(all_ids, pool.ids());
}

#[test]
fn stats_of_all_ones_matrix() {
    let m = AssignmentMatrix::all_ones(36, 4);
    let s = m.stats();
    assert!(s.prevalence.iter().all(|&p| p == 4));
    assert_eq!(s.mean_prevalence, 4.0);
    assert!(s.class_counts.iter().all(|&n| n == 36));
    assert_eq!(s.size_disparity, 0.0);
}

#[test]
fn stats_of_identity_matrix() {
    let mut entries = vec![false; 16];
    for i in 0..4 {
        entries[i * 4 + i] = true;
    }
    let m = AssignmentMatrix::from_entries(4, 4, entries).unwrap();
    assert_eq!(m.stats().mean_prevalence, 1.0);
    assert!(m.stats().class_counts.iter().all(|&n| n == 1));
    assert_eq!(m.stats().size_disparity, 0.0);
}

/// Brute-force counting oracle: recompute every statistic element by element.
#[test]
fn stats_match_elementwise_recount() {
    let mut rng = crate::seed::rng(77, &[]);
    for _ in 0..50 {
        let entries = random_valid_entries(36, 4, &mut rng);
        let m = AssignmentMatrix::from_entries(36, 4, entries.clone()).unwrap();

        for c in 0..36 {
            let row: usize = (0..4).map(|k| usize::from(entries[c * 4 + k])).sum();
            assert_eq!(m.stats().prevalence[c], row);
        }
        let mut cols = vec![0usize; 4];
        for c in 0..36 {
            for (k, col) in cols.iter_mut().enumerate() {
                *col += usize::from(entries[c * 4 + k]);
            }
        }
        assert_eq!(m.stats().class_counts, cols);
        let mean_p: f64 = m.stats().prevalence.iter().sum::<usize>() as f64 / 36.0;
        assert_eq!(m.stats().mean_prevalence, mean_p);
        let mu = cols.iter().sum::<usize>() as f64 / 4.0;
        let sigma =
            (cols.iter().map(|&n| (n as f64 - mu).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert_eq!(m.stats().size_disparity, sigma);
    }
}

pub(crate) fn random_valid_entries(
    class_count: usize,
    client_count: usize,
    rng: &mut impl rand::Rng,
) -> Vec<bool> {
    loop {
        let entries: Vec<bool> = (0..class_count * client_count)
            .map(|_| rng.random::<f64>() < 0.5)
            .collect();
        let stats = matrix_stats(&entries, class_count, client_count);
        if stats.prevalence.iter().all(|&p| p >= 1)
            && stats.class_counts.iter().all(|&n| n >= 1)
        {
            return entries;
        }
    }
}

#[test]
fn matrix_rejects_empty_rows_and_columns() {
    // class 1 on no client
    let entries = vec![true, true, false, false];
    assert!(AssignmentMatrix::from_entries(2, 2, entries).is_err());
    // client 1 holds no class
    let entries = vec![true, false, true, false];
    assert!(AssignmentMatrix::from_entries(2, 2, entries).is_err());
}

#[test]
fn matrix_text_roundtrip() {
    let mut rng = crate::seed::rng(3, &[]);
    let entries = random_valid_entries(12, 4, &mut rng);
    let m = AssignmentMatrix::from_entries(12, 4, entries).unwrap();
    let text = m.to_text();
    let back = AssignmentMatrix::from_text(&text).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.to_text(), text);
}

#[test]
fn matrix_text_rejects_stat_mismatch() {
    let m = AssignmentMatrix::all_ones(3, 2);
    let mut text = m.to_text();
    text = text.replacen("3 2 2 0", "3 2 1.5 0", 1);
    assert!(AssignmentMatrix::from_text(&text).is_err());
}

/// Balanced subsets for the partitioner: `clients` manifests, each holding
/// `samples_per_class` examples of every class.
pub(crate) fn iid_subsets(
    class_count: usize,
    clients: usize,
    samples_per_class: usize,
) -> Vec<CorpusManifest<f64>> {
    let names: Vec<String> = (0..class_count).map(|c| format!("class_{c}")).collect();
    let mut id = 0u64;
    (0..clients)
        .map(|_| {
            let mut examples = Vec::new();
            for c in 0..class_count {
                for _ in 0..samples_per_class {
                    examples.push(Example::new(id, c as i32, vec![c as f64, id as f64]));
                    id += 1;
                }
            }
            CorpusManifest::new(examples, names.clone(), "subset", 2).unwrap()
        })
        .collect()
}

#[test]
fn forced_full_prevalence_gives_all_ones() {
    let subsets = iid_subsets(36, 4, 5);
    let target = PartitionTarget::new(4.0, 0.0, 1);
    let out = predi_partition(&subsets, &target, 36, 4, 5).unwrap();
    assert_eq!(out.matrix, AssignmentMatrix::all_ones(36, 4));
    for m in &out.client_manifests {
        assert_eq!(m.per_class_counts(), vec![5; 36]);
    }
}

#[test]
fn forced_unit_prevalence_partitions_classes() {
    let subsets = iid_subsets(36, 4, 5);
    let target = PartitionTarget::new(1.0, 0.0, 2);
    let out = predi_partition(&subsets, &target, 36, 4, 5).unwrap();
    let stats = out.matrix.stats();
    assert!(stats.prevalence.iter().all(|&p| p == 1));
    assert_eq!(stats.class_counts, vec![9, 9, 9, 9]);
    // classes form a disjoint cover
    let mut owners = vec![0usize; 36];
    for c in 0..36 {
        owners[c] = out.matrix.class_clients(c).len();
    }
    assert!(owners.iter().all(|&n| n == 1));
}

#[test]
fn predi_structural_guarantees() {
    let s = 5;
    let subsets = iid_subsets(36, 4, s);
    for seed in 0..10u64 {
        let target = PartitionTarget::new(2.5, 1.0, seed);
        let out = predi_partition(&subsets, &target, 36, 4, s).unwrap();
        let stats = out.matrix.stats();

        // realized mean prevalence hits the target to increment granularity
        assert!((stats.mean_prevalence - 2.5).abs() <= 0.5 / 36.0);

        // client k holds exactly s * n_k examples, all of held classes
        for (k, m) in out.client_manifests.iter().enumerate() {
            assert_eq!(m.len(), s * stats.class_counts[k]);
            let counts = m.per_class_counts();
            for c in 0..36 {
                let expected = if out.matrix.get(c, k) { s } else { 0 };
                assert_eq!(counts[c], expected, "client {k} class {c}");
            }
        }

        // per-class holder example sets pairwise disjoint
        for c in 0..36 {
            let mut seen = std::collections::BTreeSet::new();
            for m in &out.client_manifests {
                for ex in m.examples().iter().filter(|e| e.label() == c) {
                    assert!(seen.insert(ex.id), "example {} dealt twice", ex.id);
                }
            }
        }
    }
}

#[test]
fn predi_is_deterministic() {
    let subsets = iid_subsets(12, 4, 3);
    let target = PartitionTarget::new(2.0, 1.0, 33);
    let a = predi_partition(&subsets, &target, 12, 4, 3).unwrap();
    let b = predi_partition(&subsets, &target, 12, 4, 3).unwrap();
    assert_eq!(a.matrix, b.matrix);
    for (x, y) in a.client_manifests.iter().zip(&b.client_manifests) {
        assert_eq!(x, y);
    }
}

#[test]
fn predi_rejects_infeasible_targets() {
    let subsets = iid_subsets(6, 4, 2);
    let err = predi_partition(&subsets, &PartitionTarget::new(5.0, 0.0, 0), 6, 4, 2).unwrap_err();
    assert!(matches!(err, PartitionError::InfeasibleTarget(_)));

    let err = predi_partition(&subsets, &PartitionTarget::new(0.5, 0.0, 0), 6, 4, 2).unwrap_err();
    assert!(matches!(err, PartitionError::InfeasibleTarget(_)));
}

#[test]
fn predi_rejects_insufficient_pool() {
    // only 1 example per class per subset but s = 2
    let subsets = iid_subsets(6, 4, 1);
    let err = predi_partition(&subsets, &PartitionTarget::new(2.0, 0.0, 0), 6, 4, 2).unwrap_err();
    assert!(matches!(err, PartitionError::InsufficientPool { .. }));
}

#[test]
fn predi_exhausts_retry_budget_on_unreachable_disparity() {
    let subsets = iid_subsets(8, 4, 4);
    let mut target = PartitionTarget::new(2.0, 0.0, 0);
    // Mean class count is 4; demand a disparity no integer counts in [1,8]
    // summing to 16 can reach within a 0.01 band.
    target.size_disparity = 0.37;
    target.disparity_tolerance = 0.01;
    target.max_retries = 50;
    let err = predi_partition(&subsets, &target, 8, 4, 4).unwrap_err();
    assert!(matches!(err, PartitionError::RetryBudgetExhausted { .. }));
}

/// Reduced version of the grid-fidelity acceptance criterion.
#[test]
fn predi_grid_small_sample() {
    let subsets = iid_subsets(36, 4, 2);
    for &rho in &[3.5, 2.5, 1.5] {
        for &sigma in &[0.0, 2.0] {
            let mut within = 0;
            for seed in 0..20u64 {
                let target = PartitionTarget::new(rho, sigma, seed);
                let out = predi_partition(&subsets, &target, 36, 4, 2).unwrap();
                let stats = matrix_stats(out.matrix.entries(), 36, 4);
                assert!(
                    (stats.mean_prevalence - rho).abs() <= 0.1,
                    "rho {rho} sigma {sigma} seed {seed}: got {}",
                    stats.mean_prevalence
                );
                if (stats.size_disparity - sigma).abs() <= 0.5 {
                    within += 1;
                }
            }
            assert!(within >= 18, "rho {rho} sigma {sigma}: {within}/20 within band");
        }
    }
}
