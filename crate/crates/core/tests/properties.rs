//! Property tests over the core invariants: conservation laws, round-trip
//! formats, and normalization.

use proptest::prelude::*;

use fedpredi_core::corpus::{
    build_unlabeled_pool, filter_min_count, manifest_from_str, manifest_to_string,
    sample_labeled_subsets, train_test_split, CorpusManifest, Example,
};
use fedpredi_core::learners::{log_softmax, Layout, ParamVector};
use fedpredi_core::partition::{partition_unlabeled, VolumeMode};

fn manifest_from_counts(counts: &[usize]) -> CorpusManifest<f64> {
    let mut examples = Vec::new();
    let mut id = 0u64;
    for (c, &n) in counts.iter().enumerate() {
        for i in 0..n {
            examples.push(Example::new(id, c as i32, vec![c as f64, i as f64]));
            id += 1;
        }
    }
    let names = (0..counts.len()).map(|c| format!("class_{c}")).collect();
    CorpusManifest::new(examples, names, "prop", 2).unwrap()
}

proptest! {
    /// Volume splits conserve the total exactly for any concentration and
    /// seed, with no empty client.
    #[test]
    fn volume_split_conserves_total(
        clients in 1usize..12,
        extra in 0usize..50_000,
        alpha in 0.05f64..5.0,
        iid in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let total = clients + extra;
        let mode = if iid { VolumeMode::Iid } else { VolumeMode::Dirichlet(alpha) };
        let split = partition_unlabeled(total, clients, mode, seed).unwrap();
        prop_assert_eq!(split.total(), total);
        prop_assert!(split.client_sizes.iter().all(|&n| n >= 1));
    }

    /// filter -> split -> pool conserves examples for every seed, and the
    /// per-class split sizes stay within rounding of the test fraction.
    #[test]
    fn reconstruction_conserves_and_stratifies(
        counts in prop::collection::vec(2usize..60, 1..6),
        min_count in 1usize..20,
        frac in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let manifest = manifest_from_counts(&counts);
        let Ok(filtered) = filter_min_count(&manifest, min_count) else {
            // no class survived; nothing to check
            return Ok(());
        };
        if filtered.kept.per_class_counts().iter().any(|&n| n < 2) {
            return Ok(());
        }
        let (train, test) = train_test_split(&filtered.kept, frac, seed).unwrap();
        let pool = build_unlabeled_pool(&train, &filtered.remainder).unwrap();

        prop_assert_eq!(
            manifest.len(),
            train.len() + test.len() + filtered.remainder.len()
        );
        prop_assert_eq!(pool.len(), train.len() + filtered.remainder.len());

        let kept_counts = filtered.kept.per_class_counts();
        for (c, &n_test) in test.per_class_counts().iter().enumerate() {
            let ideal = frac * kept_counts[c] as f64;
            prop_assert!((n_test as f64 - ideal).abs() <= 1.0);
            prop_assert!(n_test >= 1 && n_test < kept_counts[c]);
        }
    }

    /// Labeled subsets are pairwise id-disjoint with exactly the requested
    /// per-class size.
    #[test]
    fn subsets_partition_ids(
        classes in 1usize..5,
        clients in 1usize..4,
        s in 1usize..4,
        spare in 0usize..10,
        seed in any::<u64>(),
    ) {
        let counts = vec![clients * s + spare; classes];
        let manifest = manifest_from_counts(&counts);
        let subsets = sample_labeled_subsets(&manifest, clients, s, seed).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for subset in &subsets {
            prop_assert!(subset.per_class_counts().iter().all(|&n| n == s));
            for ex in subset.examples() {
                prop_assert!(seen.insert(ex.id));
            }
        }
        prop_assert_eq!(seen.len(), classes * clients * s);
    }

    /// Manifest text round-trips byte-identically for arbitrary finite
    /// feature values.
    #[test]
    fn manifest_text_roundtrip(
        features in prop::collection::vec(
            prop::collection::vec(-1e9f64..1e9, 3),
            1..20
        ),
        unlabeled in any::<bool>(),
    ) {
        let examples: Vec<Example<f64>> = features
            .into_iter()
            .enumerate()
            .map(|(i, f)| Example::new(i as u64, if unlabeled { -1 } else { 0 }, f))
            .collect();
        let names = if unlabeled { vec![] } else { vec!["only".to_string()] };
        let manifest = CorpusManifest::new(examples, names, "roundtrip test", 3).unwrap();
        let once = manifest_to_string(&manifest);
        let back = manifest_from_str::<f64>(&once).unwrap();
        prop_assert_eq!(manifest_to_string(&back), once);
    }

    /// Checkpoint bytes round-trip exactly for arbitrary finite parameters.
    #[test]
    fn checkpoint_roundtrip(values in prop::collection::vec(-1e12f64..1e12, 4)) {
        let layout = Layout::new(vec![
            fedpredi_core::learners::SegmentSpec::new("a", 1, 1),
            fedpredi_core::learners::SegmentSpec::new("b", 1, 1),
        ]).unwrap();
        let params = ParamVector::from_values(layout, values).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        fedpredi_core::learners::save_checkpoint(&path, &params).unwrap();
        let back = fedpredi_core::learners::load_checkpoint(&path).unwrap();
        prop_assert_eq!(back, params);
    }

    /// Softmax probabilities always sum to one within 1e-12, even for
    /// extreme logits.
    #[test]
    fn softmax_normalizes(logits in prop::collection::vec(-200f64..200.0, 1..40)) {
        let total: f64 = log_softmax(&logits).iter().map(|lp| lp.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}
