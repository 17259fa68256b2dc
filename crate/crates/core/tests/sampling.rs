use std::collections::{BTreeMap, BTreeSet};

use medic::sampling::{
    balanced_set, dos_filter, pools_by_class, rebalance_memory, reserve_memory, AnnotatedBatch,
    ClassPools, DosParams, ExemplarMemory, Sample,
};
use proptest::prelude::*;

fn pools(classes: std::ops::Range<usize>, per_class: usize) -> ClassPools<f64> {
    let samples: Vec<Sample<f64>> = classes
        .flat_map(|c| (0..per_class).map(move |i| Sample::new((c * 1000 + i) as u64, vec![i as f64], c)))
        .collect();
    pools_by_class(&samples)
}

fn batch_strategy() -> impl Strategy<Value = (Vec<(usize, u8)>, usize)> {
    // (label, coarse CE) pairs; classes below the cut-off are old.
    (prop::collection::vec((0usize..6, 0u8..4), 1..48), 0usize..4)
}

fn annotated(rows: &[(usize, u8)], n_old_classes: usize) -> AnnotatedBatch<f64> {
    let old: BTreeSet<usize> = (0..n_old_classes).collect();
    let samples = rows
        .iter()
        .enumerate()
        .map(|(i, &(label, _))| Sample::new(500 - i as u64, vec![0.0], label))
        .collect();
    AnnotatedBatch::new(samples, &old)
        .with_ce(rows.iter().map(|r| f64::from(r.1)).collect())
        .unwrap()
}

proptest! {
    #[test]
    fn curriculum_removes_the_hardest_new_samples((rows, n_old) in batch_strategy(), seed in any::<u64>()) {
        let batch = annotated(&rows, n_old);
        let params = DosParams { random_phase_epochs: 2, clamp: false };
        let out = dos_filter(&batch, 3, &params, seed).unwrap();
        let kept: BTreeSet<u64> = out.samples.iter().map(|s| s.id).collect();
        let ce = batch.ce_values.as_ref().unwrap();
        for (i, s) in batch.samples.iter().enumerate() {
            if batch.old_flags[i] || !kept.contains(&s.id) {
                continue;
            }
            // No removed new sample is easier than a kept one, and ties go to
            // the smaller id.
            for (j, t) in batch.samples.iter().enumerate() {
                if !batch.old_flags[j] && !kept.contains(&t.id) {
                    prop_assert!(ce[j] > ce[i] || (ce[j] == ce[i] && t.id < s.id));
                }
            }
        }
    }

    #[test]
    fn filter_preserves_relative_order((rows, n_old) in batch_strategy(), seed in any::<u64>(), epoch in 1usize..5) {
        let batch = annotated(&rows, n_old);
        let params = DosParams { random_phase_epochs: 2, clamp: false };
        let out = dos_filter(&batch, epoch, &params, seed).unwrap();
        let position: BTreeMap<u64, usize> = batch.samples.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
        let idx: Vec<usize> = out.samples.iter().map(|s| position[&s.id]).collect();
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn clamp_keeps_one_new_sample((rows, n_old) in batch_strategy(), seed in any::<u64>()) {
        let batch = annotated(&rows, n_old);
        let params = DosParams { random_phase_epochs: 5, clamp: true };
        let out = dos_filter(&batch, 1, &params, seed).unwrap();
        if batch.n_new() > 0 {
            prop_assert!(out.n_new() >= 1);
        }
    }

    #[test]
    fn memory_respects_budget_and_nests(budget in 10usize..80, per_class in 1usize..30, seed in any::<u64>()) {
        let first = reserve_memory(&pools(0..2, per_class), budget, seed).unwrap();
        prop_assert!(first.len() <= budget);
        let second = rebalance_memory(&first, &pools(2..5, per_class), seed ^ 1).unwrap();
        prop_assert!(second.len() <= budget);
        for class in 0..5 {
            let n = second.samples_of(class).unwrap().len();
            prop_assert_eq!(n, per_class.min(budget / 5));
        }
        for class in 0..2 {
            let before: BTreeSet<u64> = first.samples_of(class).unwrap().iter().map(|s| s.id).collect();
            prop_assert!(second.samples_of(class).unwrap().iter().all(|s| before.contains(&s.id)));
        }
    }
}

#[test]
fn balanced_set_has_equal_class_counts() {
    let memory = reserve_memory(&pools(0..4, 50), 20, 3).unwrap();
    let set = balanced_set(&memory, &pools(4..6, 50), 4).unwrap();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for s in &set {
        *counts.entry(s.label).or_default() += 1;
    }
    assert_eq!(counts.len(), 6);
    assert!(counts.values().all(|&n| n == 5), "{counts:?}");
}

#[test]
fn memory_csv_round_trip() {
    let memory = reserve_memory(&pools(0..3, 10), 12, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("memory.csv");
    memory.write_csv(&path, 1).unwrap();
    assert_eq!(ExemplarMemory::<f64>::read_csv(&path, 12).unwrap(), memory);
}

#[test]
fn memory_selection_is_seeded() {
    let a = reserve_memory(&pools(0..3, 40), 30, 1).unwrap();
    assert_eq!(a, reserve_memory(&pools(0..3, 40), 30, 1).unwrap());
    assert_ne!(a, reserve_memory(&pools(0..3, 40), 30, 2).unwrap());
}

#[test]
fn budget_below_class_count_is_rejected() {
    assert!(matches!(
        reserve_memory(&pools(0..5, 4), 3, 0),
        Err(medic::Error::Config(_))
    ));
}
